use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};

/// Added to distances before inverting so exact matches get a huge but finite weight.
pub const DISTANCE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Weighting {
    Uniform,
    InverseDistance,
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Uniform => "uniform",
            Weighting::InverseDistance => "distance",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "distance" | "inverse-distance" => Ok(Weighting::InverseDistance),
            _ => Err(Error::validation(
                "weighting",
                format!("`{s}` is not uniform|distance"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub index: usize,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    dim: usize,
    /// Row-major stored training features.
    points: Vec<f64>,
    labels: Vec<Label>,
    k: usize,
    weighting: Weighting,
}

pub fn train_knn(train: &LabeledDataset, k: usize, weighting: Weighting) -> Result<KnnModel> {
    if k == 0 {
        return Err(Error::validation("k", "must be at least 1"));
    }
    if k > train.len() {
        return Err(Error::Training(format!(
            "k = {k} exceeds the {} stored samples",
            train.len()
        )));
    }
    let dim = train.feature_count().unwrap_or(0);
    let points = train
        .samples()
        .iter()
        .flat_map(|s| s.features.iter().copied())
        .collect();
    let labels = train.samples().iter().map(|s| s.label).collect();
    Ok(KnnModel {
        dim,
        points,
        labels,
        k,
        weighting,
    })
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stored(&self) -> usize {
        self.labels.len()
    }

    pub fn with_k(&self, k: usize, weighting: Weighting) -> Result<KnnModel> {
        if k == 0 || k > self.stored() {
            return Err(Error::validation("k", format!("{k} is not in [1, {}]", self.stored())));
        }
        Ok(KnnModel {
            k,
            weighting,
            ..self.clone()
        })
    }

    /// The `k` nearest stored points by Euclidean distance, nearest first.
    /// Equal distances are ordered by storage index.
    pub fn neighbors(&self, x: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        let k = k.min(self.stored());
        let mut all: Vec<(f64, usize)> = self
            .points
            .chunks_exact(self.dim.max(1))
            .take(self.stored())
            .enumerate()
            .map(|(i, p)| {
                let d2: f64 = if self.dim == 0 {
                    0.0
                } else {
                    p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum()
                };
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < all.len() {
            all.select_nth_unstable_by(k, cmp);
            all.truncate(k);
        }
        all.sort_by(cmp);
        Ok(all
            .into_iter()
            .map(|(d2, i)| Neighbor {
                distance: d2.sqrt(),
                index: i,
                label: self.labels[i],
            })
            .collect())
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(vote(&self.neighbors(x, self.k)?, self.weighting))
    }
}

/// Class-1 share of the vote among `neighbors`.
pub fn vote(neighbors: &[Neighbor], weighting: Weighting) -> f64 {
    let mut w = [0.0f64; 2];
    for n in neighbors {
        w[n.label.index()] += match weighting {
            Weighting::Uniform => 1.0,
            Weighting::InverseDistance => 1.0 / (n.distance + DISTANCE_EPSILON),
        };
    }
    let total = w[0] + w[1];
    if total > 0.0 {
        w[1] / total
    } else {
        0.0
    }
}
