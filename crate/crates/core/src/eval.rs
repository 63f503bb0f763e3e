//! Classification metrics, learned bypass policies and the policy comparison.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cachesim::{
    oracle_bypass_policy_with_threshold, simulate, BypassPolicy, CacheConfig, CacheStats, Decision,
};
use crate::dataset::{FeatureScheme, Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::models::{Predictor, TrainedModel};
use crate::trace::Trace;

pub const DEFAULT_P_RANDOM: f64 = 0.3;

/// Counts with `Bypass` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Bypass, Label::Bypass) => self.tp += 1,
            (Label::Cache, Label::Cache) => self.tn += 1,
            (Label::Cache, Label::Bypass) => self.fp += 1,
            (Label::Bypass, Label::Cache) => self.fn_ += 1,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Mean |label - score|.
    pub mae: f64,
    pub confusion: Confusion,
    /// Indexed by label: [Cache, Bypass].
    pub precision: [f64; 2],
    pub recall: [f64; 2],
}

impl Metrics {
    fn from_parts(confusion: Confusion, abs_err_sum: f64) -> Self {
        let c = confusion;
        let n = c.total();
        Metrics {
            accuracy: ratio(c.tp + c.tn, n),
            mae: if n == 0 { 0.0 } else { abs_err_sum / n as f64 },
            confusion,
            precision: [ratio(c.tn, c.tn + c.fn_), ratio(c.tp, c.tp + c.fp)],
            recall: [ratio(c.tn, c.tn + c.fp), ratio(c.tp, c.tp + c.fn_)],
        }
    }
}

/// Scores a bare model on rows that are already normalised.
pub fn evaluate_model(model: &TrainedModel, data: &LabeledDataset) -> Result<Metrics> {
    let mut confusion = Confusion::default();
    let mut abs_err = 0.0;
    for s in data.samples() {
        let p = model.predict(&s.features)?;
        confusion.record(s.label, p.label);
        abs_err += (s.label.as_f64() - p.score).abs();
    }
    Ok(Metrics::from_parts(confusion, abs_err))
}

/// Scores a predictor on raw rows in its own feature scheme.
pub fn evaluate(predictor: &Predictor, test: &LabeledDataset) -> Result<Metrics> {
    if test.scheme() != predictor.scheme {
        return Err(Error::Evaluation(format!(
            "model was trained on {} features, test set uses {}",
            predictor.scheme,
            test.scheme()
        )));
    }
    let mut confusion = Confusion::default();
    let mut abs_err = 0.0;
    for s in test.samples() {
        let p = predictor.predict_features(&s.features)?;
        confusion.record(s.label, p.label);
        abs_err += (s.label.as_f64() - p.score).abs();
    }
    Ok(Metrics::from_parts(confusion, abs_err))
}

/// Bypasses a missing line iff the predictor labels its line address `Bypass`.
#[derive(Debug, Clone)]
pub struct ModelPolicy {
    predictor: Predictor,
}

impl ModelPolicy {
    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    pub fn decide_line(&self, line: u64) -> Decision {
        match self.predictor.predict_line(line) {
            Ok(p) if p.label == Label::Bypass => Decision::Bypass,
            _ => Decision::Insert,
        }
    }
}

pub fn policy_from_model(predictor: Predictor) -> BypassPolicy {
    BypassPolicy::Model(Box::new(ModelPolicy { predictor }))
}

/// Convenience for callers that hold the scheme separately from the predictor.
pub fn policy_from_model_with_scheme(mut predictor: Predictor, scheme: FeatureScheme) -> Result<BypassPolicy> {
    if scheme.feature_count() != predictor.normalizer.dim() {
        return Err(Error::Dimension {
            expected: predictor.normalizer.dim(),
            got: scheme.feature_count(),
        });
    }
    predictor.scheme = scheme;
    Ok(policy_from_model(predictor))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub policy: String,
    pub stats: CacheStats,
    pub miss_rate: f64,
    /// (miss_rate - baseline) / baseline, 0 when the baseline is 0.
    pub delta_vs_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: CacheConfig,
    pub rows: Vec<PolicyRow>,
}

impl ComparisonReport {
    pub fn row(&self, prefix: &str) -> Option<&PolicyRow> {
        self.rows.iter().find(|r| r.policy.starts_with(prefix))
    }

    pub fn baseline(&self) -> &PolicyRow {
        &self.rows[0]
    }

    /// `policy,miss_rate,delta_vs_baseline,bypasses,evictions`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,miss_rate,delta_vs_baseline,bypasses,evictions\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.policy, r.miss_rate, r.delta_vs_baseline, r.stats.bypasses, r.stats.evictions
            );
        }
        out
    }
}

/// Simulates never, random, model, oracle and always-bypass on one trace and
/// geometry. The first row (never) is the baseline.
pub fn compare_policies(
    trace: &Trace,
    config: &CacheConfig,
    predictor: Option<&Predictor>,
    p_random: f64,
    seed: u64,
    oracle_threshold: Option<usize>,
) -> Result<ComparisonReport> {
    let mut policies = vec![
        BypassPolicy::NeverBypass,
        BypassPolicy::random(p_random, seed)?,
    ];
    if let Some(p) = predictor {
        policies.push(policy_from_model(p.clone()));
    }
    policies.push(oracle_bypass_policy_with_threshold(
        trace,
        oracle_threshold.unwrap_or(config.capacity_lines()),
    ));
    policies.push(BypassPolicy::AlwaysBypass);

    let stats = policies
        .par_iter()
        .map(|p| simulate(trace, config, p))
        .collect::<Result<Vec<_>>>()?;
    let base = stats[0].miss_rate();
    let rows = policies
        .iter()
        .zip(stats)
        .map(|(p, s)| {
            let mr = s.miss_rate();
            PolicyRow {
                policy: p.name(),
                stats: s,
                miss_rate: mr,
                delta_vs_baseline: if base > 0.0 { (mr - base) / base } else { 0.0 },
            }
        })
        .collect();
    Ok(ComparisonReport {
        config: *config,
        rows,
    })
}

/// Share of the oracle's miss-rate reduction a policy achieves.
pub fn fraction_of_oracle_gain(baseline: f64, oracle: f64, learned: f64) -> f64 {
    let gain = baseline - oracle;
    if gain <= 0.0 {
        0.0
    } else {
        (baseline - learned) / gain
    }
}
