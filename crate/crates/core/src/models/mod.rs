//! The four bypass predictors, a uniform prediction contract, hardware size
//! estimates and the on-disk model format.

pub mod knn;
pub mod logreg;
pub mod mlp;
pub mod tree;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureScheme, Label, LabeledDataset, Normalizer};
use crate::error::{Error, Result};

pub use knn::{train_knn, KnnModel, Weighting};
pub use logreg::{train_logreg, LogRegModel, LogRegParams, Solver};
pub use mlp::{train_mlp, Activation, MlpModel, MlpParams, Optimizer};
pub use tree::{gini, train_decision_tree, DecisionTree, TreeNode};

pub const MODEL_FORMAT: &str = "bypasslab-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Turns a class-1 score into a label. Exactly 0.5 resolves to `Cache`.
pub fn label_for_score(score: f64) -> Label {
    if score > 0.5 {
        Label::Bypass
    } else {
        Label::Cache
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

impl Prediction {
    pub fn from_score(score: f64) -> Self {
        Prediction {
            label: label_for_score(score),
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Tree(DecisionTree),
    Knn(KnnModel),
    LogReg(LogRegModel),
    Mlp(MlpModel),
}

impl TrainedModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TrainedModel::Tree(_) => "tree",
            TrainedModel::Knn(_) => "knn",
            TrainedModel::LogReg(_) => "logreg",
            TrainedModel::Mlp(_) => "mlp",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TrainedModel::Tree(t) => t.n_features(),
            TrainedModel::Knn(k) => k.dim(),
            TrainedModel::LogReg(l) => l.weights.len(),
            TrainedModel::Mlp(m) => m.inputs,
        }
    }

    /// Class-1 probability (logreg, MLP), vote share (KNN) or leaf share (tree).
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let expected = self.input_dim();
        if x.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: x.len(),
            });
        }
        let score = match self {
            TrainedModel::Tree(t) => t.score(x),
            TrainedModel::Knn(k) => k.score(x)?,
            TrainedModel::LogReg(l) => l.score(x),
            TrainedModel::Mlp(m) => m.score(x),
        };
        Ok(Prediction::from_score(score))
    }

    /// Storage needed to embed the model, with 4-byte parameters.
    pub fn size_bytes(&self) -> usize {
        match self {
            TrainedModel::LogReg(l) => 4 * (l.weights.len() + 1),
            TrainedModel::Mlp(m) => 4 * (m.inputs * m.hidden + 2 * m.hidden + 1),
            // 2 B feature index + 4 B threshold + 4 B child offsets per split, 1 B per leaf
            TrainedModel::Tree(t) => 10 * t.internal_nodes() + t.leaves(),
            TrainedModel::Knn(k) => 4 * k.dim() * k.stored() + k.stored(),
        }
    }
}

pub fn model_size_bytes(model: &TrainedModel) -> usize {
    model.size_bytes()
}

/// A model kind with its hyperparameters, ready to be trained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Tree {
        max_depth: usize,
        min_impurity_split: f64,
    },
    Knn {
        k: usize,
        weighting: Weighting,
    },
    LogReg(LogRegParams),
    Mlp(MlpParams),
}

impl ModelSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::Tree { .. } => "tree",
            ModelSpec::Knn { .. } => "knn",
            ModelSpec::LogReg(_) => "logreg",
            ModelSpec::Mlp(_) => "mlp",
        }
    }

    pub fn default_for(kind: &str) -> Result<Self> {
        Ok(match kind {
            "tree" => ModelSpec::Tree {
                max_depth: 10,
                min_impurity_split: 0.0,
            },
            "knn" => ModelSpec::Knn {
                k: 5,
                weighting: Weighting::Uniform,
            },
            "logreg" => ModelSpec::LogReg(LogRegParams::default()),
            "mlp" => ModelSpec::Mlp(MlpParams::default()),
            other => {
                return Err(Error::validation(
                    "model",
                    format!("`{other}` is not tree|knn|logreg|mlp"),
                ))
            }
        })
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(field: &'static str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::validation(field, format!("cannot parse `{v}`")))
        }
        match (self, key) {
            (ModelSpec::Tree { max_depth, .. }, "depth" | "max_depth") => {
                *max_depth = num("depth", value)?
            }
            (ModelSpec::Tree { min_impurity_split, .. }, "impurity" | "min_impurity_split") => {
                *min_impurity_split = num("impurity", value)?
            }
            (ModelSpec::Knn { k, .. }, "k") => *k = num("k", value)?,
            (ModelSpec::Knn { weighting, .. }, "weighting") => *weighting = value.parse()?,
            (ModelSpec::LogReg(p), "solver") => p.solver = value.parse()?,
            (ModelSpec::LogReg(p), "lambda" | "l2_lambda") => p.l2_lambda = num("lambda", value)?,
            (ModelSpec::LogReg(p), "max_iters") => p.max_iters = num("max_iters", value)?,
            (ModelSpec::LogReg(p), "tol") => p.tol = num("tol", value)?,
            (ModelSpec::LogReg(p), "seed") => p.seed = num("seed", value)?,
            (ModelSpec::Mlp(p), "hidden" | "neurons") => p.hidden = num("hidden", value)?,
            (ModelSpec::Mlp(p), "activation") => p.activation = value.parse()?,
            (ModelSpec::Mlp(p), "optimizer") => p.optimizer = value.parse()?,
            (ModelSpec::Mlp(p), "epochs") => p.epochs = num("epochs", value)?,
            (ModelSpec::Mlp(p), "lr") => p.lr = num("lr", value)?,
            (ModelSpec::Mlp(p), "batch_size") => p.batch_size = num("batch_size", value)?,
            (ModelSpec::Mlp(p), "seed") => p.seed = num("seed", value)?,
            (spec, _) => {
                return Err(Error::validation(
                    "params",
                    format!("`{key}` is not a {} hyperparameter", spec.kind_name()),
                ))
            }
        }
        Ok(())
    }

    /// Applies comma-separated `key=value` overrides.
    pub fn with_params(mut self, params: &str) -> Result<Self> {
        for item in params.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| {
                Error::validation("params", format!("`{item}` is not key=value"))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(self)
    }

    /// Fixes the seed of seeded trainers.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ModelSpec::LogReg(p) => p.seed = seed,
            ModelSpec::Mlp(p) => p.seed = seed,
            _ => {}
        }
        self
    }

    /// Trains on already-normalised features.
    pub fn train(&self, train: &LabeledDataset) -> Result<TrainedModel> {
        Ok(match *self {
            ModelSpec::Tree {
                max_depth,
                min_impurity_split,
            } => TrainedModel::Tree(train_decision_tree(train, max_depth, min_impurity_split)?),
            ModelSpec::Knn { k, weighting } => TrainedModel::Knn(train_knn(train, k, weighting)?),
            ModelSpec::LogReg(p) => TrainedModel::LogReg(train_logreg(train, &p)?),
            ModelSpec::Mlp(p) => TrainedModel::Mlp(train_mlp(train, &p)?),
        })
    }
}

/// A trained model plus everything needed to feed it raw rows or line
/// addresses: its feature scheme and frozen normalisation constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub scheme: FeatureScheme,
    pub normalizer: Normalizer,
    pub model: TrainedModel,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    predictor: Predictor,
}

impl Predictor {
    /// Fits normalisation on `train`, then trains `spec` on the scaled rows.
    pub fn fit(spec: &ModelSpec, train: &LabeledDataset) -> Result<Self> {
        let normalizer = Normalizer::fit(train)?;
        let scaled = normalizer.apply_dataset(train)?;
        let model = spec.train(&scaled)?;
        Ok(Predictor {
            scheme: train.scheme(),
            normalizer,
            model,
        })
    }

    /// Predicts from unnormalised features in this predictor's scheme.
    pub fn predict_features(&self, raw: &[f64]) -> Result<Prediction> {
        if raw.len() != self.normalizer.dim() {
            return Err(Error::Dimension {
                expected: self.normalizer.dim(),
                got: raw.len(),
            });
        }
        self.model.predict(&self.normalizer.apply(raw))
    }

    pub fn predict_line(&self, line: u64) -> Result<Prediction> {
        self.predict_features(&self.scheme.featurize(line))
    }

    pub fn size_bytes(&self) -> usize {
        self.model.size_bytes()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            predictor: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_FORMAT_VERSION {
            return Err(Error::validation(
                "model file",
                format!(
                    "unsupported format {} v{} (expected {MODEL_FORMAT} v{MODEL_FORMAT_VERSION})",
                    file.format, file.version
                ),
            ));
        }
        Ok(file.predictor)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        Predictor::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledSample;

    #[test]
    fn tie_scores_resolve_to_cache() {
        assert_eq!(label_for_score(0.5), Label::Cache);
        assert_eq!(label_for_score(0.500001), Label::Bypass);
    }

    #[test]
    fn zero_logreg_scores_half() {
        let m = TrainedModel::LogReg(LogRegModel {
            weights: vec![0.0],
            bias: 0.0,
            solver: Solver::NewtonIrls,
            l2_lambda: 1.0,
            converged: true,
            iterations: 0,
            final_loss: 0.0,
        });
        let p = m.predict(&[3.0]).unwrap();
        assert_eq!((p.score, p.label), (0.5, Label::Cache));
        assert_eq!(m.size_bytes(), 8);
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn mlp_size_formula() {
        let m = TrainedModel::Mlp(MlpModel::init(1, 3, Activation::Logistic, 0));
        assert_eq!(m.size_bytes(), 40);
    }

    #[test]
    fn pure_leaf_scores_one() {
        let d = LabeledDataset::new(
            (0..7).map(|i| LabeledSample::new(vec![i as f64], Label::Bypass)).collect(),
            FeatureScheme::RawAddress,
        )
        .unwrap();
        let m = TrainedModel::Tree(train_decision_tree(&d, 3, 0.0).unwrap());
        let p = m.predict(&[2.0]).unwrap();
        assert_eq!((p.score, p.label), (1.0, Label::Bypass));
    }

    #[test]
    fn knn_even_split_is_cache() {
        let d = LabeledDataset::new(
            vec![
                LabeledSample::new(vec![0.0], Label::Bypass),
                LabeledSample::new(vec![1.0], Label::Bypass),
                LabeledSample::new(vec![2.0], Label::Cache),
                LabeledSample::new(vec![3.0], Label::Cache),
            ],
            FeatureScheme::RawAddress,
        )
        .unwrap();
        let m = TrainedModel::Knn(train_knn(&d, 4, Weighting::Uniform).unwrap());
        let p = m.predict(&[1.5]).unwrap();
        assert_eq!((p.score, p.label), (0.5, Label::Cache));
    }

    #[test]
    fn params_parse() {
        let spec = ModelSpec::default_for("tree")
            .unwrap()
            .with_params("depth=4, impurity=0.1")
            .unwrap();
        assert_eq!(
            spec,
            ModelSpec::Tree {
                max_depth: 4,
                min_impurity_split: 0.1
            }
        );
        assert!(ModelSpec::default_for("tree").unwrap().with_params("k=3").is_err());
        assert!(ModelSpec::default_for("forest").is_err());
    }
}
