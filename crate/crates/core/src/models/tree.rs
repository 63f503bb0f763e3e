//! Greedy CART classifier with Gini impurity and min-impurity pre-pruning.

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, LabeledDataset, LabeledSample};
use crate::error::{Error, Result};

/// Splits with gain at or below this are treated as no improvement.
const MIN_GAIN: f64 = 1e-12;

/// Binary Gini impurity `1 - p0^2 - p1^2`.
pub fn gini(counts: [usize; 2]) -> Result<f64> {
    let total = counts[0] + counts[1];
    if total == 0 {
        return Err(Error::validation("class_counts", "gini of an empty node"));
    }
    Ok(gini_unchecked(counts))
}

fn gini_unchecked(counts: [usize; 2]) -> f64 {
    let total = (counts[0] + counts[1]) as f64;
    let p0 = counts[0] as f64 / total;
    let p1 = counts[1] as f64 / total;
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [usize; 2],
    },
}

/// A candidate split: rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
    max_depth: usize,
    min_impurity_split: f64,
    n_features: usize,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn min_impurity_split(&self) -> f64 {
        self.min_impurity_split
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn internal_nodes(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Split { .. }))
            .count()
    }

    pub fn leaves(&self) -> usize {
        self.nodes.len() - self.internal_nodes()
    }

    /// Depth of the deepest leaf; a lone root leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_counts(&self, x: &[f64]) -> [usize; 2] {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Fraction of class-1 training rows in the leaf `x` lands in.
    pub fn score(&self, x: &[f64]) -> f64 {
        let [c0, c1] = self.leaf_counts(x);
        c1 as f64 / (c0 + c1) as f64
    }
}

pub fn train_decision_tree(
    train: &LabeledDataset,
    max_depth: usize,
    min_impurity_split: f64,
) -> Result<DecisionTree> {
    if train.is_empty() {
        return Err(Error::Training("decision tree needs at least one sample".into()));
    }
    if max_depth == 0 {
        return Err(Error::validation("max_depth", "must be at least 1"));
    }
    if !(0.0..=0.5).contains(&min_impurity_split) {
        return Err(Error::validation(
            "min_impurity_split",
            format!("{min_impurity_split} is not in [0, 0.5]"),
        ));
    }
    let n_features = train.feature_count().unwrap_or(0);
    let mut builder = Builder {
        samples: train.samples(),
        n_features,
        max_depth,
        min_impurity_split,
        nodes: Vec::new(),
    };
    let all: Vec<usize> = (0..train.len()).collect();
    builder.grow(all, 0);
    Ok(DecisionTree {
        nodes: builder.nodes,
        max_depth,
        min_impurity_split,
        n_features,
    })
}

fn class_counts(samples: &[LabeledSample], idx: &[usize]) -> [usize; 2] {
    let mut c = [0; 2];
    for &i in idx {
        c[samples[i].label.index()] += 1;
    }
    c
}

struct Builder<'a> {
    samples: &'a [LabeledSample],
    n_features: usize,
    max_depth: usize,
    min_impurity_split: f64,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = class_counts(self.samples, &idx);
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { counts });
        if depth >= self.max_depth || gini_unchecked(counts) <= self.min_impurity_split {
            return id;
        }
        let Some(split) = best_split_of(self.samples, &idx, self.n_features) else {
            return id;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.samples[i].features[split.feature] <= split.threshold);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// The highest-gain split of the whole dataset, if any split has positive gain.
pub fn best_split(data: &LabeledDataset) -> Option<SplitChoice> {
    let idx: Vec<usize> = (0..data.len()).collect();
    best_split_of(data.samples(), &idx, data.feature_count().unwrap_or(0))
}

/// Scans midpoints between consecutive distinct values of every feature.
/// Ties keep the earliest (feature, threshold) pair.
fn best_split_of(samples: &[LabeledSample], idx: &[usize], n_features: usize) -> Option<SplitChoice> {
    let n = idx.len();
    let total = class_counts(samples, idx);
    let parent = gini_unchecked(total);
    let mut best: Option<SplitChoice> = None;
    let mut order = idx.to_vec();
    for f in 0..n_features {
        order.sort_by(|&a, &b| samples[a].features[f].total_cmp(&samples[b].features[f]));
        let mut left = [0usize; 2];
        for pos in 0..n - 1 {
            left[samples[order[pos]].label.index()] += 1;
            let v = samples[order[pos]].features[f];
            let next = samples[order[pos + 1]].features[f];
            if next <= v {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let nl = (pos + 1) as f64;
            let nr = (n - pos - 1) as f64;
            let gain =
                parent - (nl * gini_unchecked(left) + nr * gini_unchecked(right)) / n as f64;
            if gain > MIN_GAIN && best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: v + (next - v) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

impl DecisionTree {
    pub fn majority(counts: [usize; 2]) -> Label {
        if counts[1] > counts[0] {
            Label::Bypass
        } else {
            Label::Cache
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureScheme;

    fn one_d(values: &[(f64, Label)]) -> LabeledDataset {
        LabeledDataset::new(
            values
                .iter()
                .map(|&(v, l)| LabeledSample::new(vec![v], l))
                .collect(),
            FeatureScheme::RawAddress,
        )
        .unwrap()
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini([10, 0]).unwrap(), 0.0);
        assert_eq!(gini([5, 5]).unwrap(), 0.5);
        assert_eq!(gini([3, 1]).unwrap(), 0.375);
        assert!(gini([0, 0]).is_err());
    }

    #[test]
    fn threshold_data_one_split() {
        let rows: Vec<(f64, Label)> = (0..100)
            .map(|i| {
                let v = i as f64;
                (v, if v > 50.0 { Label::Bypass } else { Label::Cache })
            })
            .collect();
        let tree = train_decision_tree(&one_d(&rows), 1, 0.0).unwrap();
        match tree.nodes()[0] {
            TreeNode::Split { threshold, .. } => assert!((threshold - 50.5).abs() < 1e-9),
            _ => panic!("root should split"),
        }
        assert!(rows.iter().all(|&(v, l)| (tree.score(&[v]) > 0.5) == (l == Label::Bypass)));
    }

    #[test]
    fn max_impurity_gives_single_leaf() {
        let rows: Vec<(f64, Label)> = (0..30)
            .map(|i| (i as f64, if i % 3 == 0 { Label::Bypass } else { Label::Cache }))
            .collect();
        let tree = train_decision_tree(&one_d(&rows), 10, 0.5).unwrap();
        assert_eq!(tree.nodes(), &[TreeNode::Leaf { counts: [20, 10] }]);
        assert_eq!(tree.depth(), 0);
    }

    #[test]
    fn depth_is_bounded() {
        let rows: Vec<(f64, Label)> = (0..64)
            .map(|i| (i as f64, if i % 2 == 0 { Label::Bypass } else { Label::Cache }))
            .collect();
        for depth in 1..6 {
            let tree = train_decision_tree(&one_d(&rows), depth, 0.0).unwrap();
            assert!(tree.depth() <= depth);
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let d = one_d(&[(1.0, Label::Cache)]);
        assert!(train_decision_tree(&d, 0, 0.0).is_err());
        assert!(train_decision_tree(&d, 3, 0.6).is_err());
        let empty = one_d(&[]);
        assert!(matches!(train_decision_tree(&empty, 3, 0.0), Err(Error::Training(_))));
    }
}
