//! Labeled bypass datasets: reuse-oracle labeling, address featurization,
//! SMOTE balancing and stratified splitting.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cachesim::forward_reuse_distances;
use crate::error::{Error, Result};
use crate::trace::Trace;

pub const DIGIT_WIDTH: usize = 20;

/// Largest integer an f64 carries exactly; raw address features must stay below it.
const MAX_EXACT_F64: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Cache = 0,
    Bypass = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_f64(self) -> f64 {
        self.index() as f64
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Cache),
            1 => Some(Label::Bypass),
            _ => None,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Cache => Label::Bypass,
            Label::Bypass => Label::Cache,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: Label,
    pub origin_seq: Option<u64>,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        LabeledSample {
            features,
            label,
            origin_seq: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum FeatureScheme {
    /// The line address as a single real-valued feature.
    RawAddress,
    /// Base-10 digits, least significant first, zero padded.
    DecimalDigits { width: usize },
    /// Little-endian chunks of `chunk_bytes` bytes.
    ByteChunks { chunk_bytes: usize },
}

impl FeatureScheme {
    pub fn digits() -> Self {
        FeatureScheme::DecimalDigits { width: DIGIT_WIDTH }
    }

    pub fn chunks(chunk_bytes: usize) -> Result<Self> {
        check_chunk_bytes(chunk_bytes)?;
        Ok(FeatureScheme::ByteChunks { chunk_bytes })
    }

    pub fn feature_count(&self) -> usize {
        match *self {
            FeatureScheme::RawAddress => 1,
            FeatureScheme::DecimalDigits { width } => width,
            FeatureScheme::ByteChunks { chunk_bytes } => 8 / chunk_bytes,
        }
    }

    pub fn featurize(&self, address: u64) -> Vec<f64> {
        match *self {
            FeatureScheme::RawAddress => vec![address as f64],
            FeatureScheme::DecimalDigits { .. } => {
                split_digits(address).into_iter().map(f64::from).collect()
            }
            FeatureScheme::ByteChunks { chunk_bytes } => split_chunks(address, chunk_bytes)
                .expect("chunk size validated at construction")
                .into_iter()
                .map(|c| c as f64)
                .collect(),
        }
    }

    /// Guesses the scheme from a dataset's column count (1, 20, 8, 4 or 2).
    pub fn infer_from_width(width: usize) -> Option<Self> {
        match width {
            1 => Some(FeatureScheme::RawAddress),
            DIGIT_WIDTH => Some(FeatureScheme::digits()),
            8 => Some(FeatureScheme::ByteChunks { chunk_bytes: 1 }),
            4 => Some(FeatureScheme::ByteChunks { chunk_bytes: 2 }),
            2 => Some(FeatureScheme::ByteChunks { chunk_bytes: 4 }),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureScheme::RawAddress => f.write_str("raw"),
            FeatureScheme::DecimalDigits { .. } => f.write_str("digits"),
            FeatureScheme::ByteChunks { chunk_bytes } => write!(f, "chunks:{chunk_bytes}"),
        }
    }
}

impl FromStr for FeatureScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(FeatureScheme::RawAddress),
            "digits" => Ok(FeatureScheme::digits()),
            _ => {
                let c = s
                    .strip_prefix("chunks:")
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::validation("scheme", format!("`{s}` is not raw|digits|chunks:<c>"))
                    })?;
                FeatureScheme::chunks(c)
            }
        }
    }
}

fn check_chunk_bytes(c: usize) -> Result<()> {
    if c == 0 || 8 % c != 0 {
        return Err(Error::validation(
            "chunk_bytes",
            format!("{c} does not divide 8"),
        ));
    }
    Ok(())
}

/// Decimal digits of `address`, least significant first, padded to 20.
pub fn split_digits(address: u64) -> Vec<u8> {
    let mut digits = Vec::with_capacity(DIGIT_WIDTH);
    let mut rest = address;
    while rest != 0 {
        digits.push((rest % 10) as u8);
        rest /= 10;
    }
    digits.resize(DIGIT_WIDTH, 0);
    digits
}

/// `8 / chunk_bytes` chunks of `address`, least significant chunk first.
pub fn split_chunks(address: u64, chunk_bytes: usize) -> Result<Vec<u64>> {
    check_chunk_bytes(chunk_bytes)?;
    let bits = 8 * chunk_bytes as u32;
    let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
    Ok((0..8 / chunk_bytes as u32)
        .map(|i| address.checked_shr(bits * i).unwrap_or(0) & mask)
        .collect())
}

/// Per-feature min-max scaling to [0, 1]. Constant features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Normalizer {
    pub fn fit(dataset: &LabeledDataset) -> Result<Self> {
        let d = dataset.feature_count().ok_or(Error::EmptyDataset)?;
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for s in &dataset.samples {
            for (j, &v) in s.features.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        Ok(Normalizer { mins, maxs })
    }

    pub fn identity(d: usize) -> Self {
        Normalizer {
            mins: vec![0.0; d],
            maxs: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }

    pub fn apply_dataset(&self, dataset: &LabeledDataset) -> Result<LabeledDataset> {
        if let Some(d) = dataset.feature_count() {
            if d != self.dim() {
                return Err(Error::Dimension {
                    expected: self.dim(),
                    got: d,
                });
            }
        }
        let samples = dataset
            .samples
            .iter()
            .map(|s| LabeledSample {
                features: self.apply(&s.features),
                ..s.clone()
            })
            .collect();
        LabeledDataset::new(samples, dataset.scheme)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<LabeledSample>,
    scheme: FeatureScheme,
    class_counts: [usize; 2],
}

impl LabeledDataset {
    /// Checks that all rows share one finite feature vector length.
    pub fn new(samples: Vec<LabeledSample>, scheme: FeatureScheme) -> Result<Self> {
        let mut class_counts = [0; 2];
        let width = samples.first().map(|s| s.features.len());
        for (i, s) in samples.iter().enumerate() {
            if Some(s.features.len()) != width {
                return Err(Error::Dimension {
                    expected: width.unwrap_or(0),
                    got: s.features.len(),
                });
            }
            if let Some(v) = s.features.iter().find(|v| !v.is_finite()) {
                return Err(Error::validation(
                    "features",
                    format!("sample {i} has non-finite value {v}"),
                ));
            }
            class_counts[s.label.index()] += 1;
        }
        Ok(LabeledDataset {
            samples,
            scheme,
            class_counts,
        })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn scheme(&self) -> FeatureScheme {
        self.scheme
    }

    pub fn class_counts(&self) -> [usize; 2] {
        self.class_counts
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_count(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }

    /// Most frequent label; ties go to `Cache`.
    pub fn majority_label(&self) -> Label {
        if self.class_counts[1] > self.class_counts[0] {
            Label::Bypass
        } else {
            Label::Cache
        }
    }

    pub fn into_samples(self) -> Vec<LabeledSample> {
        self.samples
    }
}

/// Labels every access: `Bypass` iff its line is never reused or reused
/// beyond `threshold` distinct lines. Features are the raw line address.
pub fn label_trace(trace: &Trace, threshold: usize) -> Result<LabeledDataset> {
    if threshold == 0 {
        return Err(Error::validation("threshold", "must be at least 1"));
    }
    if trace.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let distances = forward_reuse_distances(trace);
    let samples = trace
        .accesses()
        .iter()
        .zip(distances)
        .map(|(a, d)| LabeledSample {
            features: FeatureScheme::RawAddress.featurize(trace.line_of(a)),
            label: if d.exceeds(threshold) {
                Label::Bypass
            } else {
                Label::Cache
            },
            origin_seq: Some(a.seq),
        })
        .collect();
    LabeledDataset::new(samples, FeatureScheme::RawAddress)
}

/// Re-expresses a raw-address dataset under `scheme`.
///
/// Fractional raw values (SMOTE synthetics) are rounded to the nearest address.
pub fn featurize(dataset: &LabeledDataset, scheme: FeatureScheme) -> Result<LabeledDataset> {
    if dataset.scheme != FeatureScheme::RawAddress {
        return Err(Error::validation(
            "scheme",
            format!("featurize expects a raw-address dataset, got {}", dataset.scheme),
        ));
    }
    if let FeatureScheme::ByteChunks { chunk_bytes } = scheme {
        check_chunk_bytes(chunk_bytes)?;
    }
    let samples = dataset
        .samples
        .iter()
        .map(|s| {
            let v = s.features[0].round();
            if !(0.0..MAX_EXACT_F64).contains(&v) {
                return Err(Error::validation(
                    "features",
                    format!("raw address {v} is not exactly representable"),
                ));
            }
            Ok(LabeledSample {
                features: scheme.featurize(v as u64),
                ..s.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(samples, scheme)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Oversamples the minority class until both classes are the same size.
///
/// Each synthetic row is `x + u * (x' - x)` for a minority row `x`, one of
/// its `k` nearest minority neighbours `x'` (Euclidean on min-max scaled
/// features) and `u ~ U[0, 1)`. Originals come first, in input order.
pub fn smote_balance(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<LabeledDataset> {
    if k == 0 {
        return Err(Error::validation("k", "must be at least 1"));
    }
    let [cache, bypass] = dataset.class_counts;
    if cache == 0 || bypass == 0 {
        return Err(Error::Labeling(format!(
            "SMOTE needs both classes (cache={cache}, bypass={bypass}); relabel with a different threshold"
        )));
    }
    if cache == bypass {
        return Ok(dataset.clone());
    }
    let minority_label = if cache < bypass {
        Label::Cache
    } else {
        Label::Bypass
    };
    let deficit = cache.abs_diff(bypass);
    let minority: Vec<usize> = dataset
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label == minority_label)
        .map(|(i, _)| i)
        .collect();

    let norm = Normalizer::fit(dataset)?;
    let scaled: Vec<Vec<f64>> = minority
        .iter()
        .map(|&i| norm.apply(&dataset.samples[i].features))
        .collect();
    let m = minority.len();
    let k = k.min(m.saturating_sub(1));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let mut neighbor_cache: Vec<Option<Vec<usize>>> = vec![None; m];

    let mut samples = dataset.samples.clone();
    samples.reserve(deficit);
    for j in 0..deficit {
        let a = order[j % m];
        let base = &dataset.samples[minority[a]].features;
        let features = if k == 0 {
            base.clone()
        } else {
            let neighbors = neighbor_cache[a].get_or_insert_with(|| {
                let mut cand: Vec<(f64, usize)> = (0..m)
                    .filter(|&b| b != a)
                    .map(|b| (squared_distance(&scaled[a], &scaled[b]), b))
                    .collect();
                cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                cand.truncate(k);
                cand.into_iter().map(|(_, b)| b).collect()
            });
            let b = neighbors[rng.random_range(0..neighbors.len())];
            let other = &dataset.samples[minority[b]].features;
            let u: f64 = rng.random();
            base.iter().zip(other).map(|(x, y)| x + u * (y - x)).collect()
        };
        samples.push(LabeledSample {
            features,
            label: minority_label,
            origin_seq: None,
        });
    }
    LabeledDataset::new(samples, dataset.scheme)
}

/// Stratified split. Each class contributes its largest-remainder share of
/// `round(n * test_fraction)` test rows, and at least one row to each side.
pub fn train_test_split(
    dataset: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::validation(
            "test_fraction",
            format!("{test_fraction} is not in (0, 1)"),
        ));
    }
    for (label, &count) in dataset.class_counts.iter().enumerate() {
        if count < 2 {
            return Err(Error::Stratification(format!(
                "class {label} has {count} samples; at least 2 are needed"
            )));
        }
    }
    let n = dataset.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let ideal: Vec<f64> = dataset
        .class_counts
        .iter()
        .map(|&c| c as f64 * n_test as f64 / n as f64)
        .collect();
    let mut take: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut short = n_test - take.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..2).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for c in by_remainder {
        if short == 0 {
            break;
        }
        take[c] += 1;
        short -= 1;
    }
    for (c, t) in take.iter_mut().enumerate() {
        *t = (*t).clamp(1, dataset.class_counts[c] - 1);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; n];
    for (c, &t) in take.iter().enumerate() {
        let mut idx: Vec<usize> = (0..n)
            .filter(|&i| dataset.samples[i].label.index() == c)
            .collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..t] {
            is_test[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (s, t) in dataset.samples.iter().zip(is_test) {
        if t {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((
        LabeledDataset::new(train, dataset.scheme)?,
        LabeledDataset::new(test, dataset.scheme)?,
    ))
}

/// Writes `f0,...,fn,label`.
pub fn write_dataset(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    let d = dataset.feature_count().unwrap_or(dataset.scheme.feature_count());
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for s in &dataset.samples {
        let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        row.push(s.label.index().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset CSV. Without an explicit scheme it is inferred from the
/// column count.
pub fn read_dataset(path: impl AsRef<Path>, scheme: Option<FeatureScheme>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let width = headers.len();
    if width < 2 || headers.get(width - 1) != Some("label") {
        return Err(Error::Parse {
            line: 1,
            message: "expected header `f0,...,fn,label`".into(),
        });
    }
    let d = width - 1;
    let scheme = match scheme {
        Some(s) => s,
        None => FeatureScheme::infer_from_width(d).ok_or_else(|| {
            Error::validation("scheme", format!("cannot infer a scheme from {d} features"))
        })?,
    };
    if scheme.feature_count() != d {
        return Err(Error::Dimension {
            expected: scheme.feature_count(),
            got: d,
        });
    }
    let mut samples = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let bad = |message: String| Error::Parse { line, message };
        let features = (0..d)
            .map(|j| {
                rec[j]
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad feature `{}`", &rec[j])))
            })
            .collect::<Result<Vec<_>>>()?;
        let label = match &rec[d] {
            "0" => Label::Cache,
            "1" => Label::Bypass,
            other => return Err(bad(format!("bad label `{other}` (expected 0 or 1)"))),
        };
        samples.push(LabeledSample {
            features,
            label,
            origin_seq: None,
        });
    }
    LabeledDataset::new(samples, scheme)
}
