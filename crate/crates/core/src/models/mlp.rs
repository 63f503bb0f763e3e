//! One-hidden-layer perceptron with a sigmoid output, trained by backprop on
//! mean binary cross-entropy.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, LabeledSample};
use crate::error::{Error, Result};
use crate::models::logreg::sigmoid;

pub const MAX_HIDDEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Logistic,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Logistic => sigmoid(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative given pre-activation `z` and activation `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Logistic => a * (1.0 - a),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Logistic => "logistic",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" | "sigmoid" => Ok(Activation::Logistic),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::validation(
                "activation",
                format!("`{s}` is not logistic|relu"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd,
    Adam,
    BatchGd,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
            Optimizer::BatchGd => "gd",
        })
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            "gd" | "batch-gd" => Ok(Optimizer::BatchGd),
            _ => Err(Error::validation(
                "optimizer",
                format!("`{s}` is not sgd|adam|gd"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub activation: Activation,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub lr: f64,
    /// Minibatch size for Adam; SGD always uses 1 and BatchGd the full set.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: 3,
            activation: Activation::Logistic,
            optimizer: Optimizer::Adam,
            epochs: 200,
            lr: 0.01,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub inputs: usize,
    pub hidden: usize,
    /// Hidden weights, row `j` holds the `inputs` weights of neuron `j`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub activation: Activation,
    pub optimizer: Optimizer,
    pub loss_curve: Vec<f64>,
}

/// Gradient in the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpGradient {
    fn zeros(d: usize, h: usize) -> Self {
        MlpGradient {
            w1: vec![0.0; d * h],
            b1: vec![0.0; h],
            w2: vec![0.0; h],
            b2: 0.0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w1.len() + 2 * self.b1.len() + 1);
        v.extend(&self.w1);
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl MlpModel {
    /// Uniform fan-in initialisation: hidden weights in +-1/sqrt(d), output
    /// weights in +-1/sqrt(h), zero biases.
    pub fn init(inputs: usize, hidden: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r1 = 1.0 / (inputs.max(1) as f64).sqrt();
        let r2 = 1.0 / (hidden.max(1) as f64).sqrt();
        MlpModel {
            inputs,
            hidden,
            w1: (0..inputs * hidden).map(|_| rng.random_range(-r1..=r1)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden).map(|_| rng.random_range(-r2..=r2)).collect(),
            b2: 0.0,
            activation,
            optimizer: Optimizer::Adam,
            loss_curve: Vec::new(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.inputs * self.hidden + 2 * self.hidden + 1
    }

    pub fn parameters(&self) -> Vec<f64> {
        MlpGradient {
            w1: self.w1.clone(),
            b1: self.b1.clone(),
            w2: self.w2.clone(),
            b2: self.b2,
        }
        .flatten()
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        let (d, h) = (self.inputs, self.hidden);
        assert_eq!(p.len(), self.parameter_count());
        self.w1.copy_from_slice(&p[..d * h]);
        self.b1.copy_from_slice(&p[d * h..d * h + h]);
        self.w2.copy_from_slice(&p[d * h + h..d * h + 2 * h]);
        self.b2 = p[d * h + 2 * h];
    }

    /// Output logit plus hidden pre-activations and activations.
    fn forward(&self, x: &[f64], z1: &mut [f64], a1: &mut [f64]) -> f64 {
        let d = self.inputs;
        let mut out = self.b2;
        for j in 0..self.hidden {
            let row = &self.w1[j * d..(j + 1) * d];
            let z = self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            z1[j] = z;
            a1[j] = self.activation.apply(z);
            out += self.w2[j] * a1[j];
        }
        out
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let mut z1 = vec![0.0; self.hidden];
        let mut a1 = vec![0.0; self.hidden];
        sigmoid(self.forward(x, &mut z1, &mut a1))
    }

    /// Mean cross-entropy over `data`.
    pub fn loss(&self, data: &[LabeledSample]) -> f64 {
        let mut z1 = vec![0.0; self.hidden];
        let mut a1 = vec![0.0; self.hidden];
        data.iter()
            .map(|s| {
                let z = self.forward(&s.features, &mut z1, &mut a1);
                softplus(z) - s.label.as_f64() * z
            })
            .sum::<f64>()
            / data.len() as f64
    }

    /// Mean cross-entropy and its backpropagated gradient over `data`.
    pub fn loss_and_gradient(&self, data: &[LabeledSample]) -> (f64, MlpGradient) {
        let (d, h) = (self.inputs, self.hidden);
        let mut grad = MlpGradient::zeros(d, h);
        let mut z1 = vec![0.0; h];
        let mut a1 = vec![0.0; h];
        let mut loss = 0.0;
        for s in data {
            let y = s.label.as_f64();
            let z = self.forward(&s.features, &mut z1, &mut a1);
            loss += softplus(z) - y * z;
            let delta_out = sigmoid(z) - y;
            grad.b2 += delta_out;
            for j in 0..h {
                grad.w2[j] += delta_out * a1[j];
                let delta_h = delta_out * self.w2[j] * self.activation.derivative(z1[j], a1[j]);
                grad.b1[j] += delta_h;
                for (g, x) in grad.w1[j * d..(j + 1) * d].iter_mut().zip(&s.features) {
                    *g += delta_h * x;
                }
            }
        }
        let n = data.len() as f64;
        grad.w1.iter_mut().for_each(|g| *g /= n);
        grad.b1.iter_mut().for_each(|g| *g /= n);
        grad.w2.iter_mut().for_each(|g| *g /= n);
        grad.b2 /= n;
        (loss / n, grad)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

pub fn train_mlp(train: &LabeledDataset, params: &MlpParams) -> Result<MlpModel> {
    if train.is_empty() {
        return Err(Error::Training("MLP needs at least one sample".into()));
    }
    if !(1..=MAX_HIDDEN).contains(&params.hidden) {
        return Err(Error::validation(
            "hidden",
            format!("{} is not in [1, {MAX_HIDDEN}]", params.hidden),
        ));
    }
    if !(params.lr > 0.0 && params.lr.is_finite()) {
        return Err(Error::validation("lr", format!("{} must be positive", params.lr)));
    }
    if params.batch_size == 0 {
        return Err(Error::validation("batch_size", "must be at least 1"));
    }
    let data = train.samples();
    let d = train.feature_count().unwrap_or(0);
    let mut model = MlpModel::init(d, params.hidden, params.activation, params.seed);
    model.optimizer = params.optimizer;

    // Initialisation and shuffling draw from separate streams.
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = match params.optimizer {
        Optimizer::Sgd => 1,
        Optimizer::Adam => params.batch_size,
        Optimizer::BatchGd => data.len(),
    };
    let mut adam = Adam::new(model.parameter_count());
    let mut batch_rows: Vec<LabeledSample> = Vec::with_capacity(batch);
    for epoch in 0..params.epochs {
        if params.optimizer != Optimizer::BatchGd {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            batch_rows.clear();
            batch_rows.extend(chunk.iter().map(|&i| data[i].clone()));
            let (_, grad) = model.loss_and_gradient(&batch_rows);
            let mut p = model.parameters();
            let g = grad.flatten();
            match params.optimizer {
                Optimizer::Adam => adam.step(&mut p, &g, params.lr),
                Optimizer::Sgd | Optimizer::BatchGd => {
                    p.iter_mut().zip(&g).for_each(|(w, gi)| *w -= params.lr * gi)
                }
            }
            model.set_parameters(&p);
        }
        let loss = model.loss(data);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        model.loss_curve.push(loss);
    }
    Ok(model)
}
