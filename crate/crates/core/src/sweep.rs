//! Hyperparameter sweeps: one trained model per grid point, evaluated on a
//! held-out split, rows kept in grid order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::{LabeledDataset, Normalizer};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, Confusion};
use crate::models::knn::{vote, Neighbor};
use crate::models::{
    label_for_score, train_knn, LogRegParams, MlpParams, ModelSpec, Solver, TrainedModel,
    Weighting,
};

pub const SWEEP_HEADER: &str =
    "model,param,value,weighting_or_solver,train_acc,test_acc,mae,size_bytes,ms";

pub const DEPTH_GRID: std::ops::RangeInclusive<usize> = 1..=10;
pub const K_GRID: std::ops::RangeInclusive<usize> = 1..=17;
pub const NEURON_GRID: std::ops::RangeInclusive<usize> = 1..=20;
/// 0.00, 0.05, ..., 0.50.
pub fn impurity_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepKind {
    TreeDepth,
    TreeImpurity,
    KnnK,
    LogRegSolver,
    MlpNeurons,
}

impl SweepKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "tree-depth" | "depth" => SweepKind::TreeDepth,
            "tree-impurity" | "impurity" => SweepKind::TreeImpurity,
            "knn" => SweepKind::KnnK,
            "logreg" => SweepKind::LogRegSolver,
            "mlp" => SweepKind::MlpNeurons,
            _ => {
                return Err(Error::validation(
                    "model",
                    format!("`{s}` is not tree-depth|tree-impurity|knn|logreg|mlp"),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub param: &'static str,
    pub value: f64,
    pub variant: String,
    pub spec: ModelSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub kind: SweepKind,
    pub grid: Vec<GridPoint>,
}

impl SweepPlan {
    /// Depth 1..=10 at a fixed impurity threshold.
    pub fn tree_depth(min_impurity_split: f64) -> Self {
        SweepPlan {
            kind: SweepKind::TreeDepth,
            grid: DEPTH_GRID
                .map(|d| GridPoint {
                    param: "depth",
                    value: d as f64,
                    variant: "gini".into(),
                    spec: ModelSpec::Tree {
                        max_depth: d,
                        min_impurity_split,
                    },
                })
                .collect(),
        }
    }

    /// Impurity threshold 0..=0.5 in steps of 0.05 at a fixed depth.
    pub fn tree_impurity(max_depth: usize) -> Self {
        SweepPlan {
            kind: SweepKind::TreeImpurity,
            grid: impurity_grid()
                .into_iter()
                .map(|imp| GridPoint {
                    param: "impurity",
                    value: imp,
                    variant: "gini".into(),
                    spec: ModelSpec::Tree {
                        max_depth,
                        min_impurity_split: imp,
                    },
                })
                .collect(),
        }
    }

    /// K = 1..=17 with one weighting.
    pub fn knn(weighting: Weighting) -> Self {
        SweepPlan {
            kind: SweepKind::KnnK,
            grid: K_GRID
                .map(|k| GridPoint {
                    param: "k",
                    value: k as f64,
                    variant: weighting.to_string(),
                    spec: ModelSpec::Knn { k, weighting },
                })
                .collect(),
        }
    }

    pub fn logreg(base: LogRegParams) -> Self {
        SweepPlan {
            kind: SweepKind::LogRegSolver,
            grid: Solver::ALL
                .iter()
                .enumerate()
                .map(|(i, &solver)| GridPoint {
                    param: "solver",
                    value: i as f64,
                    variant: solver.to_string(),
                    spec: ModelSpec::LogReg(LogRegParams { solver, ..base }),
                })
                .collect(),
        }
    }

    /// Hidden neurons 1..=20.
    pub fn mlp(base: MlpParams) -> Self {
        SweepPlan {
            kind: SweepKind::MlpNeurons,
            grid: NEURON_GRID
                .map(|h| GridPoint {
                    param: "neurons",
                    value: h as f64,
                    variant: base.optimizer.to_string(),
                    spec: ModelSpec::Mlp(MlpParams { hidden: h, ..base }),
                })
                .collect(),
        }
    }

    /// Concatenates grids; the result keeps this plan's kind but may mix models.
    pub fn chain(mut self, other: SweepPlan) -> Self {
        self.grid.extend(other.grid);
        self
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowMetrics {
    pub train_acc: f64,
    pub test_acc: f64,
    pub mae: f64,
    pub size_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub model: &'static str,
    pub param: &'static str,
    pub value: f64,
    pub variant: String,
    /// Failed grid points carry the training error instead of metrics.
    pub outcome: std::result::Result<RowMetrics, String>,
    pub ms: u128,
}

impl SweepRow {
    pub fn metrics(&self) -> Option<&RowMetrics> {
        self.outcome.as_ref().ok()
    }
}

/// Rows compare equal on everything but wall time.
impl PartialEq for SweepRow {
    fn eq(&self, other: &Self) -> bool {
        self.model == other.model
            && self.param == other.param
            && self.value.to_bits() == other.value.to_bits()
            && self.variant == other.variant
            && self.outcome == other.outcome
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// CSV with [`SWEEP_HEADER`]. Without `record_timing` the `ms` column is 0
    /// so reruns are byte-identical.
    pub fn to_csv(&self, record_timing: bool) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for r in &self.rows {
            let ms = if record_timing { r.ms } else { 0 };
            match &r.outcome {
                Ok(m) => {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{}",
                        r.model,
                        r.param,
                        r.value,
                        r.variant,
                        m.train_acc,
                        m.test_acc,
                        m.mae,
                        m.size_bytes,
                        ms
                    );
                }
                Err(_) => {
                    let _ = writeln!(out, "{},{},{},{},,,,,{}", r.model, r.param, r.value, r.variant, ms);
                }
            }
        }
        out
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.outcome.is_err())
    }
}

/// Trains every grid point on `train` and scores it on `test`.
///
/// Min-max constants are fitted on `train` and reused for `test`. Grid
/// points run in parallel; row order follows the grid.
pub fn run_sweep(plan: &SweepPlan, train: &LabeledDataset, test: &LabeledDataset) -> Result<SweepResult> {
    if plan.is_empty() {
        return Err(Error::validation("grid", "sweep grid is empty"));
    }
    let normalizer = Normalizer::fit(train)?;
    let train = normalizer.apply_dataset(train)?;
    let test = normalizer.apply_dataset(test)?;

    // Chained plans may mix KNN points with other models.
    let max_k = plan
        .grid
        .iter()
        .filter_map(|p| match p.spec {
            ModelSpec::Knn { k, .. } => Some(k),
            _ => None,
        })
        .max();
    let knn_cache = max_k.map(|k| KnnCache::build(&train, &test, k)).transpose()?;

    let rows = plan
        .grid
        .par_iter()
        .map(|point| {
            let start = Instant::now();
            let outcome = match (&knn_cache, point.spec) {
                (Some(cache), ModelSpec::Knn { k, weighting }) => cache.row(&train, k, weighting),
                _ => train_and_score(&point.spec, &train, &test),
            };
            SweepRow {
                model: point.spec.kind_name(),
                param: point.param,
                value: point.value,
                variant: point.variant.clone(),
                outcome: outcome.map_err(|e| e.to_string()),
                ms: start.elapsed().as_millis(),
            }
        })
        .collect();
    Ok(SweepResult { rows })
}

fn train_and_score(spec: &ModelSpec, train: &LabeledDataset, test: &LabeledDataset) -> Result<RowMetrics> {
    let model = spec.train(train)?;
    row_metrics(&model, train, test)
}

fn row_metrics(model: &TrainedModel, train: &LabeledDataset, test: &LabeledDataset) -> Result<RowMetrics> {
    let on_train = evaluate_model(model, train)?;
    let on_test = evaluate_model(model, test)?;
    Ok(RowMetrics {
        train_acc: on_train.accuracy,
        test_acc: on_test.accuracy,
        mae: on_test.mae,
        size_bytes: model.size_bytes(),
    })
}

/// Nearest-neighbour lists for every train and test row, computed once for
/// the largest K so each K row only re-votes a prefix.
struct KnnCache {
    train_neighbors: Vec<Vec<Neighbor>>,
    test_neighbors: Vec<Vec<Neighbor>>,
    train_labels: Vec<crate::dataset::Label>,
    test_labels: Vec<crate::dataset::Label>,
}

impl KnnCache {
    fn build(train: &LabeledDataset, test: &LabeledDataset, max_k: usize) -> Result<Self> {
        let max_k = max_k.min(train.len());
        let index = train_knn(train, max_k.max(1), Weighting::Uniform)?;
        let lists = |d: &LabeledDataset| -> Result<Vec<Vec<Neighbor>>> {
            d.samples()
                .par_iter()
                .map(|s| index.neighbors(&s.features, max_k))
                .collect()
        };
        Ok(KnnCache {
            train_neighbors: lists(train)?,
            test_neighbors: lists(test)?,
            train_labels: train.samples().iter().map(|s| s.label).collect(),
            test_labels: test.samples().iter().map(|s| s.label).collect(),
        })
    }

    fn row(&self, train: &LabeledDataset, k: usize, weighting: Weighting) -> Result<RowMetrics> {
        let model = TrainedModel::Knn(train_knn(train, k, weighting)?);
        let score = |lists: &[Vec<Neighbor>], labels: &[crate::dataset::Label]| {
            let mut confusion = Confusion::default();
            let mut abs_err = 0.0;
            for (nb, &truth) in lists.iter().zip(labels) {
                let s = vote(&nb[..k], weighting);
                confusion.record(truth, label_for_score(s));
                abs_err += (truth.as_f64() - s).abs();
            }
            (confusion, abs_err)
        };
        let (train_conf, _) = score(&self.train_neighbors, &self.train_labels);
        let (test_conf, test_err) = score(&self.test_neighbors, &self.test_labels);
        let acc = |c: Confusion| (c.tp + c.tn) as f64 / c.total().max(1) as f64;
        Ok(RowMetrics {
            train_acc: acc(train_conf),
            test_acc: acc(test_conf),
            mae: test_err / self.test_labels.len().max(1) as f64,
            size_bytes: model.size_bytes(),
        })
    }
}

/// Accuracy of always predicting the training majority on `test`.
pub fn majority_baseline_accuracy(train: &LabeledDataset, test: &LabeledDataset) -> f64 {
    let majority = train.majority_label();
    let hits = test.samples().iter().filter(|s| s.label == majority).count();
    hits as f64 / test.len().max(1) as f64
}

/// Maps a sweep's (model, param) to its plot-panel name.
pub fn panel_name(model: &str, param: &str) -> String {
    match (model, param) {
        ("tree", "depth") => "tree_depth".into(),
        ("tree", "impurity") => "tree_impurity".into(),
        ("knn", "k") => "knn_k".into(),
        ("logreg", "solver") => "logreg_solver".into(),
        ("mlp", "neurons") => "mlp_neurons".into(),
        (m, p) => format!("{m}_{p}"),
    }
}

/// Splits sweep CSVs into one plot-data file per (input, panel), named
/// `<input stem>_<panel>.csv`. Returns the files written, sorted.
pub fn write_report(inputs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for input in inputs {
        if !input.exists() {
            return Err(Error::MissingInput(input.clone()));
        }
        let text = fs::read_to_string(input)?;
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == SWEEP_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("{} is not a sweep CSV", input.display()),
                })
            }
        }
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sweep".into());
        let mut panels: BTreeMap<String, String> = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let mut fields = line.split(',');
            let (Some(model), Some(param)) = (fields.next(), fields.next()) else {
                return Err(Error::Parse {
                    line: i + 2,
                    message: "truncated sweep row".into(),
                });
            };
            let body = panels
                .entry(panel_name(model, param))
                .or_insert_with(|| format!("{SWEEP_HEADER}\n"));
            body.push_str(line);
            body.push('\n');
        }
        for (panel, body) in panels {
            let path = out_dir.join(format!("{stem}_{panel}.csv"));
            fs::write(&path, body)?;
            written.push(path);
        }
    }
    written.sort();
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_sizes() {
        assert_eq!(SweepPlan::tree_depth(0.0).len(), 10);
        assert_eq!(SweepPlan::tree_impurity(10).len(), 11);
        assert_eq!(SweepPlan::knn(Weighting::Uniform).len(), 17);
        assert_eq!(SweepPlan::logreg(LogRegParams::default()).len(), 3);
        assert_eq!(SweepPlan::mlp(MlpParams::default()).len(), 20);
        assert_eq!(impurity_grid()[3], 0.15);
        assert_eq!(*impurity_grid().last().unwrap(), 0.5);
    }

    #[test]
    fn sweep_kind_names() {
        assert_eq!(SweepKind::parse("tree-depth").unwrap(), SweepKind::TreeDepth);
        assert!(SweepKind::parse("forest").is_err());
    }
}
