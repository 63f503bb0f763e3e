//! Memory-access traces, the trace CSV format, and seeded synthetic workloads.
//!
//! A trace file looks like
//!
//! ```text
//! # source=zipf line_size_log2=7
//! seq,address,kind
//! 0,0x1000,L
//! 1,0x1080,S
//! ```
//!
//! The leading `#` metadata line is optional on input (defaults: 128-byte
//! lines, source taken from the file stem) and always written on output.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LINE_SIZE_LOG2: u32 = 7;
pub const MIN_LINE_SIZE_LOG2: u32 = 4;
pub const MAX_LINE_SIZE_LOG2: u32 = 8;

const TRACE_HEADER: &str = "seq,address,kind";

/// Maps a byte address to its cache-line address.
///
/// Every address-to-line conversion in the crate goes through here.
#[inline]
pub fn line_address(address: u64, line_size_log2: u32) -> u64 {
    address >> line_size_log2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    Load,
    Store,
}

impl AccessKind {
    fn tag(self) -> char {
        match self {
            AccessKind::Load => 'L',
            AccessKind::Store => 'S',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemoryAccess {
    pub seq: u64,
    pub address: u64,
    pub kind: AccessKind,
}

/// An immutable, program-ordered sequence of accesses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    accesses: Vec<MemoryAccess>,
    line_size_log2: u32,
    source: String,
}

impl Trace {
    /// Builds a trace, checking that `seq` runs 0, 1, 2, ... and the line size is in range.
    pub fn new(
        accesses: Vec<MemoryAccess>,
        line_size_log2: u32,
        source: impl Into<String>,
    ) -> Result<Self> {
        check_line_size(line_size_log2)?;
        if let Some((i, a)) = accesses
            .iter()
            .enumerate()
            .find(|(i, a)| a.seq != *i as u64)
        {
            return Err(Error::Integrity(format!(
                "expected seq {i}, found {} (sequence numbers must be contiguous from 0)",
                a.seq
            )));
        }
        Ok(Trace {
            accesses,
            line_size_log2,
            source: source.into(),
        })
    }

    /// Builds a trace of loads from bare addresses, numbering them in order.
    pub fn from_addresses(
        addresses: impl IntoIterator<Item = u64>,
        line_size_log2: u32,
        source: impl Into<String>,
    ) -> Result<Self> {
        let accesses = addresses
            .into_iter()
            .enumerate()
            .map(|(i, address)| MemoryAccess {
                seq: i as u64,
                address,
                kind: AccessKind::Load,
            })
            .collect();
        Trace::new(accesses, line_size_log2, source)
    }

    pub fn accesses(&self) -> &[MemoryAccess] {
        &self.accesses
    }

    pub fn len(&self) -> usize {
        self.accesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accesses.is_empty()
    }

    pub fn line_size_log2(&self) -> u32 {
        self.line_size_log2
    }

    pub fn line_size(&self) -> u64 {
        1 << self.line_size_log2
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn line_of(&self, access: &MemoryAccess) -> u64 {
        line_address(access.address, self.line_size_log2)
    }

    pub fn line_addresses(&self) -> impl Iterator<Item = u64> + '_ {
        self.accesses
            .iter()
            .map(move |a| line_address(a.address, self.line_size_log2))
    }
}

fn check_line_size(line_size_log2: u32) -> Result<()> {
    if !(MIN_LINE_SIZE_LOG2..=MAX_LINE_SIZE_LOG2).contains(&line_size_log2) {
        return Err(Error::validation(
            "line_size_log2",
            format!(
                "{line_size_log2} is outside [{MIN_LINE_SIZE_LOG2}, {MAX_LINE_SIZE_LOG2}] (16B to 256B lines)"
            ),
        ));
    }
    Ok(())
}

/// Converts a line size in bytes (16..=256, power of two) into its log2.
pub fn line_size_log2_from_bytes(bytes: u64) -> Result<u32> {
    if !bytes.is_power_of_two() {
        return Err(Error::validation(
            "line_size",
            format!("{bytes} is not a power of two"),
        ));
    }
    let log2 = bytes.trailing_zeros();
    check_line_size(log2)?;
    Ok(log2)
}

pub fn write_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(
        out,
        "# source={} line_size_log2={}",
        trace.source, trace.line_size_log2
    )?;
    writeln!(out, "{TRACE_HEADER}")?;
    for a in &trace.accesses {
        writeln!(out, "{},{:#x},{}", a.seq, a.address, a.kind.tag())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let default_source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_trace(&text, &default_source)
}

/// Parses trace CSV text. Line numbers in errors are 1-based.
pub fn parse_trace(text: &str, default_source: &str) -> Result<Trace> {
    let mut source = default_source.to_string();
    let mut line_size_log2 = DEFAULT_LINE_SIZE_LOG2;
    let mut saw_header = false;
    let mut accesses = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end_matches('\r');
        if let Some(meta) = line.strip_prefix('#') {
            for item in meta.split_whitespace() {
                match item.split_once('=') {
                    Some(("source", v)) => source = v.to_string(),
                    Some(("line_size_log2", v)) => {
                        line_size_log2 = v.parse().map_err(|_| Error::Parse {
                            line: lineno,
                            message: format!("bad line_size_log2 `{v}`"),
                        })?
                    }
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line.trim() != TRACE_HEADER {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected header `{TRACE_HEADER}`, found `{line}`"),
                });
            }
            saw_header = true;
            continue;
        }
        accesses.push(parse_row(line, lineno)?);
    }
    if !saw_header {
        return Err(Error::Parse {
            line: 1,
            message: format!("missing header `{TRACE_HEADER}`"),
        });
    }
    Trace::new(accesses, line_size_log2, source)
}

fn parse_row(line: &str, lineno: usize) -> Result<MemoryAccess> {
    let bad = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let [seq, address, kind] = fields[..] else {
        return Err(bad(format!("expected 3 fields, found {}", fields.len())));
    };
    let seq = seq
        .parse::<u64>()
        .map_err(|_| bad(format!("bad seq `{seq}`")))?;
    let hex = address
        .strip_prefix("0x")
        .or_else(|| address.strip_prefix("0X"))
        .ok_or_else(|| bad(format!("address `{address}` lacks 0x prefix")))?;
    let address =
        u64::from_str_radix(hex, 16).map_err(|_| bad(format!("bad address `{address}`")))?;
    let kind = match kind {
        "L" => AccessKind::Load,
        "S" => AccessKind::Store,
        other => return Err(bad(format!("bad kind `{other}` (expected L or S)"))),
    };
    Ok(MemoryAccess { seq, address, kind })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkloadKind {
    Streaming,
    Strided,
    ZipfHotSet,
    GatherRandom,
    RegionLabeledMix,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 5] = [
        WorkloadKind::Streaming,
        WorkloadKind::Strided,
        WorkloadKind::ZipfHotSet,
        WorkloadKind::GatherRandom,
        WorkloadKind::RegionLabeledMix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::Streaming => "streaming",
            WorkloadKind::Strided => "strided",
            WorkloadKind::ZipfHotSet => "zipf",
            WorkloadKind::GatherRandom => "gather",
            WorkloadKind::RegionLabeledMix => "region-mix",
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WorkloadKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::validation(
                    "kind",
                    format!("unknown workload `{s}` (streaming|strided|zipf|gather|region-mix)"),
                )
            })
    }
}

/// Kind-specific knobs. Fields a kind does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadParams {
    /// Byte address of the first line touched.
    pub base: u64,
    /// Strided: distance between consecutive accesses.
    pub stride_bytes: u64,
    /// Strided and GatherRandom: lines in the touched footprint.
    pub footprint_lines: u64,
    /// ZipfHotSet: skew of the line popularity distribution.
    pub zipf_exponent: f64,
    /// ZipfHotSet: number of distinct hot lines.
    pub hot_lines: u64,
    /// ZipfHotSet: share of accesses that stream through never-reused lines.
    pub stream_fraction: f64,
    /// RegionLabeledMix: number of contiguous address regions.
    pub region_count: usize,
    /// RegionLabeledMix: distance between region starts, in lines.
    pub region_lines: u64,
    /// RegionLabeledMix: per-region probability that an access re-touches a
    /// recently used line of that region. Empty means alternate
    /// `DEFAULT_HOT_REUSE` and 0.0 starting with region 0.
    pub region_reuse: Vec<f64>,
    /// RegionLabeledMix: how many recent lines per region are candidates for reuse.
    pub reuse_window: usize,
    /// Probability that an access is a store.
    pub store_fraction: f64,
}

pub const DEFAULT_HOT_REUSE: f64 = 0.95;

impl Default for WorkloadParams {
    fn default() -> Self {
        WorkloadParams {
            base: 0,
            stride_bytes: 256,
            footprint_lines: 2048,
            zipf_exponent: 1.0,
            hot_lines: 512,
            stream_fraction: 0.0,
            region_count: 4,
            region_lines: 1 << 20,
            region_reuse: Vec::new(),
            reuse_window: 4,
            store_fraction: 0.1,
        }
    }
}

impl WorkloadParams {
    /// Effective per-region reuse probabilities.
    pub fn region_reuse_probs(&self) -> Vec<f64> {
        if self.region_reuse.is_empty() {
            (0..self.region_count)
                .map(|r| if r % 2 == 0 { DEFAULT_HOT_REUSE } else { 0.0 })
                .collect()
        } else {
            self.region_reuse.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub length: usize,
    pub seed: u64,
    pub line_size_log2: u32,
    pub params: WorkloadParams,
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind, length: usize, seed: u64) -> Self {
        WorkloadSpec {
            kind,
            length,
            seed,
            line_size_log2: DEFAULT_LINE_SIZE_LOG2,
            params: WorkloadParams::default(),
        }
    }

    /// A Zipf hot set interleaved with a never-reused stream (half the accesses each).
    pub fn hot_stream_mix(length: usize, seed: u64) -> Self {
        let mut spec = WorkloadSpec::new(WorkloadKind::ZipfHotSet, length, seed);
        spec.params.stream_fraction = 0.5;
        spec
    }

    /// Forty regions of 10^6 lines; region r is hot iff `r % 10 < 5`. Reuse
    /// is then decided by one decimal digit of the line address, while the
    /// raw address alternates hot and cold in eight bands.
    pub fn decimal_banded(length: usize, seed: u64) -> Self {
        Self::banded(length, seed, 40, 1_000_000, |r| r % 10 < 5)
    }

    /// Twenty regions of 2^31 lines; even regions are hot, so reuse is
    /// decided by the top bit of the low 32-bit chunk of the line address.
    pub fn chunk_banded(length: usize, seed: u64) -> Self {
        Self::banded(length, seed, 20, 1 << 31, |r| r % 2 == 0)
    }

    fn banded(length: usize, seed: u64, regions: usize, region_lines: u64, hot: fn(usize) -> bool) -> Self {
        let mut spec = WorkloadSpec::new(WorkloadKind::RegionLabeledMix, length, seed);
        spec.params.region_count = regions;
        spec.params.region_lines = region_lines;
        spec.params.region_reuse = (0..regions).map(|r| if hot(r) { 0.99 } else { 0.0 }).collect();
        spec.params.reuse_window = 1;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if self.length == 0 {
            return Err(Error::validation("length", "must be at least 1"));
        }
        check_line_size(self.line_size_log2)?;
        for (field, v) in [
            ("store_fraction", p.store_fraction),
            ("stream_fraction", p.stream_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(field, format!("{v} is not in [0, 1]")));
            }
        }
        match self.kind {
            WorkloadKind::Streaming => {}
            WorkloadKind::Strided => {
                if p.stride_bytes == 0 {
                    return Err(Error::validation("stride_bytes", "must be positive"));
                }
                if p.footprint_lines == 0 {
                    return Err(Error::validation("footprint_lines", "must be positive"));
                }
            }
            WorkloadKind::GatherRandom => {
                if p.footprint_lines == 0 {
                    return Err(Error::validation("footprint_lines", "must be positive"));
                }
            }
            WorkloadKind::ZipfHotSet => {
                if !(p.zipf_exponent > 0.0 && p.zipf_exponent.is_finite()) {
                    return Err(Error::validation(
                        "zipf_exponent",
                        format!("{} must be a positive number", p.zipf_exponent),
                    ));
                }
                if p.hot_lines == 0 {
                    return Err(Error::validation("hot_lines", "hot-set size must be at least 1"));
                }
            }
            WorkloadKind::RegionLabeledMix => {
                if p.region_count < 2 {
                    return Err(Error::validation(
                        "region_count",
                        format!("{} regions given, at least 2 required", p.region_count),
                    ));
                }
                if p.region_lines == 0 {
                    return Err(Error::validation("region_lines", "must be positive"));
                }
                if p.reuse_window == 0 {
                    return Err(Error::validation("reuse_window", "must be at least 1"));
                }
                let probs = p.region_reuse_probs();
                if probs.len() != p.region_count {
                    return Err(Error::validation(
                        "region_reuse",
                        format!(
                            "{} probabilities given for {} regions",
                            probs.len(),
                            p.region_count
                        ),
                    ));
                }
                if let Some(bad) = probs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
                    return Err(Error::validation(
                        "region_reuse",
                        format!("{bad} is not in [0, 1]"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Region index of a line address under this spec's layout, if it falls in a region.
    pub fn region_of_line(&self, line: u64) -> Option<usize> {
        let base_line = line_address(self.params.base, self.line_size_log2);
        let offset = line.checked_sub(base_line)?;
        let r = (offset / self.params.region_lines) as usize;
        (r < self.params.region_count).then_some(r)
    }
}

/// Generates the trace described by `spec`. Identical specs give identical traces.
pub fn generate_trace(spec: &WorkloadSpec) -> Result<Trace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = &spec.params;
    let line = 1u64 << spec.line_size_log2;
    let base_line = line_address(p.base, spec.line_size_log2);
    let words_per_line = line / 4;

    let mut lines: Vec<(u64, bool)> = Vec::with_capacity(spec.length);
    match spec.kind {
        WorkloadKind::Streaming => {
            lines.extend((0..spec.length as u64).map(|i| (base_line + i, false)));
        }
        WorkloadKind::Strided => {
            // Strided keeps the exact in-line offset of the stride.
            let footprint = p.footprint_lines * line;
            let accesses = (0..spec.length as u64)
                .map(|i| {
                    let offset = i.wrapping_mul(p.stride_bytes) % footprint;
                    MemoryAccess {
                        seq: i,
                        address: p.base + offset,
                        kind: pick_kind(&mut rng, p.store_fraction),
                    }
                })
                .collect();
            return Trace::new(accesses, spec.line_size_log2, spec.kind.name());
        }
        WorkloadKind::GatherRandom => {
            for _ in 0..spec.length {
                lines.push((base_line + rng.random_range(0..p.footprint_lines), true));
            }
        }
        WorkloadKind::ZipfHotSet => {
            let zipf = Zipf::new(p.hot_lines as f64, p.zipf_exponent)
                .map_err(|e| Error::validation("zipf_exponent", e.to_string()))?;
            let stream_base = base_line + p.hot_lines.max(1 << 20);
            let mut next_stream = 0u64;
            for _ in 0..spec.length {
                if p.stream_fraction > 0.0 && rng.random::<f64>() < p.stream_fraction {
                    lines.push((stream_base + next_stream, false));
                    next_stream += 1;
                } else {
                    // Zipf samples ranks 1..=n; rank 1 is the hottest line.
                    let rank = zipf.sample(&mut rng) as u64;
                    lines.push((base_line + rank - 1, true));
                }
            }
        }
        WorkloadKind::RegionLabeledMix => {
            let probs = p.region_reuse_probs();
            let mut windows: Vec<VecDeque<u64>> = vec![VecDeque::new(); p.region_count];
            let mut fresh = vec![0u64; p.region_count];
            for _ in 0..spec.length {
                let r = rng.random_range(0..p.region_count);
                let window = &mut windows[r];
                let reuse = !window.is_empty() && rng.random::<f64>() < probs[r];
                let line_addr = if reuse {
                    window[rng.random_range(0..window.len())]
                } else {
                    let l = base_line + r as u64 * p.region_lines + fresh[r] % p.region_lines;
                    fresh[r] += 1;
                    window.push_back(l);
                    if window.len() > p.reuse_window {
                        window.pop_front();
                    }
                    l
                };
                lines.push((line_addr, true));
            }
        }
    }

    let accesses = lines
        .into_iter()
        .enumerate()
        .map(|(i, (l, word_offset))| {
            let offset = if word_offset {
                rng.random_range(0..words_per_line) * 4
            } else {
                0
            };
            MemoryAccess {
                seq: i as u64,
                address: (l << spec.line_size_log2) + offset,
                kind: pick_kind(&mut rng, p.store_fraction),
            }
        })
        .collect();
    Trace::new(accesses, spec.line_size_log2, spec.kind.name())
}

fn pick_kind(rng: &mut ChaCha8Rng, store_fraction: f64) -> AccessKind {
    if store_fraction > 0.0 && rng.random::<f64>() < store_fraction {
        AccessKind::Store
    } else {
        AccessKind::Load
    }
}
