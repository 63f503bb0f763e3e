//! Plain-text run manifests.
//!
//! ```text
//! # comments start with '#'
//! [gen-trace]
//! kind = region-mix
//! length = 10000
//! seed = 7
//! out = trace.csv
//! out.sha256 = 3f1c...
//! ```
//!
//! Each `[stage]` block is one subcommand invocation; every `key = value`
//! becomes `--key value` (a value of `true` becomes a bare `--key`). A
//! `<key>.sha256` entry pins the digest of the file named by `<key>`.
//! Lines before the first block are run-level settings such as
//! `tool_version`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DIGEST_SUFFIX: &str = ".sha256";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageBlock {
    pub name: String,
    /// Parameters in file order, digest entries excluded.
    pub params: Vec<(String, String)>,
    /// Pinned digests, keyed by the parameter they belong to.
    pub digests: Vec<(String, String)>,
}

impl StageBlock {
    pub fn new(name: impl Into<String>) -> Self {
        StageBlock {
            name: name.into(),
            params: Vec::new(),
            digests: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn digest(&self, key: &str) -> Option<&str> {
        self.digests
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_digest(&mut self, key: &str, digest: String) {
        match self.digests.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = digest,
            None => self.digests.push((key.to_string(), digest)),
        }
    }
}

/// Every stage's parameters, seeds and file digests.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunManifest {
    pub settings: Vec<(String, String)>,
    pub stages: Vec<StageBlock>,
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut manifest = RunManifest::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Manifest(format!("line {}: {message}", i + 1));
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| bad(format!("unterminated stage header `{line}`")))?
                    .trim();
                if name.is_empty() {
                    return Err(bad("empty stage name".into()));
                }
                manifest.stages.push(StageBlock::new(name));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, found `{line}`")))?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if key.is_empty() {
                return Err(bad("empty key".into()));
            }
            match manifest.stages.last_mut() {
                None => manifest.settings.push((key, value)),
                Some(stage) => match key.strip_suffix(DIGEST_SUFFIX) {
                    Some(target) => stage.set_digest(target, value),
                    None => stage.params.push((key, value)),
                },
            }
        }
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        RunManifest::parse(&fs::read_to_string(path)?)
    }

    pub fn setting(&self, key: &str) -> Option<&str> {
        self.settings
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_setting(&mut self, key: &str, value: impl ToString) {
        match self.settings.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value.to_string(),
            None => self.settings.push((key.to_string(), value.to_string())),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.settings {
            let _ = writeln!(out, "{k} = {v}");
        }
        for stage in &self.stages {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "[{}]", stage.name);
            for (k, v) in &stage.params {
                let _ = writeln!(out, "{k} = {v}");
                if let Some(d) = stage.digest(k) {
                    let _ = writeln!(out, "{k}{DIGEST_SUFFIX} = {d}");
                }
            }
        }
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    Ok(sha256_hex(&fs::read(path)?))
}

/// Digest of a directory: sha256 over sorted `name digest` lines of its files.
pub fn dir_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    if !path.is_dir() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut entries: Vec<(String, String)> = Vec::new();
    for entry in fs::read_dir(path)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            entries.push((
                entry.file_name().to_string_lossy().into_owned(),
                file_digest(entry.path())?,
            ));
        }
    }
    entries.sort();
    let listing: String = entries
        .iter()
        .map(|(n, d)| format!("{n} {d}\n"))
        .collect();
    Ok(sha256_hex(listing.as_bytes()))
}
