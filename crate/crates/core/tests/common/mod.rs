//! Brute-force references shared by the integration tests. Everything here
//! is deliberately naive: explicit recency lists, quadratic scans, full
//! enumeration. The library is checked against these, never the reverse.

#![allow(dead_code)]

use std::collections::HashSet;

use bypasslab::dataset::{FeatureScheme, Label, LabeledDataset, LabeledSample};
use bypasslab::models::Weighting;
use bypasslab::trace::{Trace, DEFAULT_LINE_SIZE_LOG2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A trace of `n` accesses over `universe` distinct lines.
pub fn random_trace(rng: &mut ChaCha8Rng, n: usize, universe: u64) -> Trace {
    let addrs: Vec<u64> = (0..n)
        .map(|_| (rng.random_range(0..universe) << DEFAULT_LINE_SIZE_LOG2) + rng.random_range(0..32) * 4)
        .collect();
    Trace::from_addresses(addrs, DEFAULT_LINE_SIZE_LOG2, "random").unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefOutcome {
    Hit,
    Inserted,
    Bypassed,
}

/// Set-associative LRU with each set kept as a recency list (front = MRU).
/// `bypass(i, line)` is asked on every miss.
pub fn reference_lru(
    lines: &[u64],
    sets: usize,
    ways: usize,
    mut bypass: impl FnMut(usize, u64) -> bool,
) -> (Vec<RefOutcome>, u64) {
    let mut state: Vec<Vec<u64>> = vec![Vec::new(); sets];
    let mut evictions = 0;
    let mut out = Vec::with_capacity(lines.len());
    for (i, &line) in lines.iter().enumerate() {
        let set = &mut state[(line % sets as u64) as usize];
        if let Some(pos) = set.iter().position(|&l| l == line) {
            let l = set.remove(pos);
            set.insert(0, l);
            out.push(RefOutcome::Hit);
        } else if bypass(i, line) {
            out.push(RefOutcome::Bypassed);
        } else {
            if set.len() == ways {
                set.pop();
                evictions += 1;
            }
            set.insert(0, line);
            out.push(RefOutcome::Inserted);
        }
    }
    (out, evictions)
}

/// Forward reuse distance by scanning ahead: distinct lines strictly
/// between access i and the next access to the same line.
pub fn reference_reuse(lines: &[u64]) -> Vec<Option<usize>> {
    (0..lines.len())
        .map(|i| {
            let mut seen = HashSet::new();
            for &l in &lines[i + 1..] {
                if l == lines[i] {
                    return Some(seen.len());
                }
                seen.insert(l);
            }
            None
        })
        .collect()
}

fn gini(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    1.0 - (c[0] as f64 / n).powi(2) - (c[1] as f64 / n).powi(2)
}

/// Best Gini gain over every feature and every midpoint threshold, each
/// candidate recounted from scratch.
pub fn exhaustive_best_gain(samples: &[LabeledSample]) -> Option<f64> {
    let n = samples.len();
    let d = samples[0].features.len();
    let mut total = [0usize; 2];
    for s in samples {
        total[s.label.index()] += 1;
    }
    let parent = gini(total);
    let mut best: Option<f64> = None;
    for f in 0..d {
        let mut values: Vec<f64> = samples.iter().map(|s| s.features[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let mut left = [0usize; 2];
            let mut right = [0usize; 2];
            for s in samples {
                if s.features[f] <= thr {
                    left[s.label.index()] += 1;
                } else {
                    right[s.label.index()] += 1;
                }
            }
            let nl = (left[0] + left[1]) as f64;
            let nr = (right[0] + right[1]) as f64;
            let gain = parent - (nl * gini(left) + nr * gini(right)) / n as f64;
            if gain > 1e-12 && best.is_none_or(|b| gain > b) {
                best = Some(gain);
            }
        }
    }
    best
}

/// KNN class-1 vote share by sorting every stored point.
pub fn reference_knn_score(train: &[LabeledSample], x: &[f64], k: usize, weighting: Weighting) -> f64 {
    let mut all: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let d2: f64 = s.features.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
            (d2.sqrt(), i)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut w = [0.0; 2];
    for &(dist, i) in all.iter().take(k) {
        w[train[i].label.index()] += match weighting {
            Weighting::Uniform => 1.0,
            Weighting::InverseDistance => 1.0 / (dist + 1e-9),
        };
    }
    w[1] / (w[0] + w[1])
}

/// Central differences of `f` at `p`, one coordinate at a time.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, p: &[f64], h: f64) -> Vec<f64> {
    let mut x = p.to_vec();
    (0..p.len())
        .map(|i| {
            x[i] = p[i] + h;
            let up = f(&x);
            x[i] = p[i] - h;
            let down = f(&x);
            x[i] = p[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// ||a - b|| / max(||a||, ||b||, tiny).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Two overlapping Gaussian blobs in `d` dimensions.
pub fn blobs(seed: u64, n: usize, d: usize, separation: f64) -> LabeledDataset {
    use rand_distr::{Distribution, Normal};
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let samples = (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Cache } else { Label::Bypass };
            let shift = if label == Label::Bypass { separation } else { 0.0 };
            let features = (0..d).map(|_| normal.sample(&mut r) + shift).collect();
            LabeledSample::new(features, label)
        })
        .collect();
    LabeledDataset::new(samples, FeatureScheme::RawAddress).unwrap()
}

/// Random dataset with small integer-valued features, so ties are common.
pub fn small_grid_dataset(r: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<LabeledSample> {
    (0..n)
        .map(|_| {
            let features = (0..d).map(|_| r.random_range(0..6) as f64).collect();
            let label = if r.random_bool(0.5) { Label::Bypass } else { Label::Cache };
            LabeledSample::new(features, label)
        })
        .collect()
}

/// A small end-to-end manifest touching every file-producing stage. Paths
/// are relative to the manifest's directory.
pub const PIPELINE_MANIFEST: &str = "\
# region mix through labels, balancing, splitting and a few models
[gen-trace]
kind = region-mix
length = 3000
seed = 7
out = trace.csv

[label]
trace = trace.csv
out = labels.csv

[balance]
in = labels.csv
seed = 3
out = balanced.csv

[featurize]
in = balanced.csv
scheme = digits
out = digits.csv

[split]
in = digits.csv
seed = 5
train-out = train.csv
test-out = test.csv

[train]
model = mlp
params = hidden=3,epochs=40
in = train.csv
seed = 1
out = mlp.json

[sweep]
model = tree-depth
data = train.csv
test = test.csv
seed = 1
out = sweep_depth.csv

[sweep]
model = knn
grid = 1,3,5
weighting = distance
data = train.csv
test = test.csv
seed = 1
out = sweep_knn.csv

[eval]
model = mlp.json
data = test.csv
out = eval.csv

[compare]
trace = trace.csv
model = mlp.json
seed = 2
out = compare.csv

[report]
inputs = sweep_depth.csv,sweep_knn.csv
out-dir = report
";

/// Every regular file under `dir`, relative path -> bytes.
pub fn snapshot(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Random two-class dataset with at least two rows of each class.
pub fn random_dataset(seed: u64, d: usize) -> LabeledDataset {
    let mut r = rng(seed);
    let n = r.random_range(4..120);
    let bypass_share = r.random_range(0.05..0.5);
    let mut samples: Vec<LabeledSample> = (0..n)
        .map(|_| {
            let label = if r.random_bool(bypass_share) { Label::Bypass } else { Label::Cache };
            let features = (0..d).map(|_| r.random_range(-50.0..50.0)).collect();
            LabeledSample::new(features, label)
        })
        .collect();
    // Both classes present, at least two of each.
    for (i, label) in [Label::Cache, Label::Cache, Label::Bypass, Label::Bypass].into_iter().enumerate() {
        samples[i].label = label;
    }
    LabeledDataset::new(samples, FeatureScheme::RawAddress).unwrap()
}
