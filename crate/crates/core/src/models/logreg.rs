//! L2-regularised logistic regression with three interchangeable solvers.
//!
//! Objective (bias unregularised):
//!
//! ```text
//! J(w, b) = mean_i [ softplus(z_i) - y_i z_i ] + (lambda / 2) |w|^2,   z_i = w.x_i + b
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, LabeledSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Solver {
    NewtonIrls,
    BatchGd,
    Sag,
}

impl Solver {
    pub const ALL: [Solver; 3] = [Solver::NewtonIrls, Solver::BatchGd, Solver::Sag];
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::NewtonIrls => "newton",
            Solver::BatchGd => "gd",
            Solver::Sag => "sag",
        })
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton" | "irls" => Ok(Solver::NewtonIrls),
            "gd" | "batch-gd" => Ok(Solver::BatchGd),
            "sag" => Ok(Solver::Sag),
            _ => Err(Error::validation("solver", format!("`{s}` is not newton|gd|sag"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub solver: Solver,
    pub l2_lambda: f64,
    /// Newton/GD iterations, or SAG epochs.
    pub max_iters: usize,
    /// Convergence threshold on the full-gradient Euclidean norm.
    pub tol: f64,
    /// Sample order for SAG.
    pub seed: u64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            solver: Solver::NewtonIrls,
            l2_lambda: 1e-2,
            max_iters: 20_000,
            tol: 1e-9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub solver: Solver,
    pub l2_lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_loss: f64,
}

impl LogRegModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, x) + self.bias)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(g: &[f64], gb: f64) -> f64 {
    (g.iter().map(|v| v * v).sum::<f64>() + gb * gb).sqrt()
}

/// The regularised mean negative log-likelihood.
pub fn logreg_objective(weights: &[f64], bias: f64, data: &[LabeledSample], l2_lambda: f64) -> f64 {
    let n = data.len() as f64;
    let nll: f64 = data
        .iter()
        .map(|s| {
            let z = dot(weights, &s.features) + bias;
            softplus(z) - s.label.as_f64() * z
        })
        .sum::<f64>()
        / n;
    nll + 0.5 * l2_lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`logreg_objective`]: (d/dw, d/db).
pub fn logreg_gradient(
    weights: &[f64],
    bias: f64,
    data: &[LabeledSample],
    l2_lambda: f64,
) -> (Vec<f64>, f64) {
    let n = data.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for s in data {
        let r = sigmoid(dot(weights, &s.features) + bias) - s.label.as_f64();
        for (g, x) in gw.iter_mut().zip(&s.features) {
            *g += r * x;
        }
        gb += r;
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2_lambda * w;
    }
    (gw, gb / n)
}

pub fn train_logreg(train: &LabeledDataset, params: &LogRegParams) -> Result<LogRegModel> {
    if train.is_empty() {
        return Err(Error::Training("logistic regression needs samples".into()));
    }
    let counts = train.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::Training(
            "logistic regression needs both classes in the training data".into(),
        ));
    }
    if !(params.l2_lambda > 0.0 && params.l2_lambda.is_finite()) {
        return Err(Error::validation(
            "l2_lambda",
            format!("{} must be positive", params.l2_lambda),
        ));
    }
    let data = train.samples();
    let d = train.feature_count().unwrap_or(0);
    let state = match params.solver {
        Solver::NewtonIrls => newton(data, d, params),
        Solver::BatchGd => gradient_descent(data, d, params),
        Solver::Sag => sag(data, d, params),
    };
    let final_loss = logreg_objective(&state.w, state.b, data, params.l2_lambda);
    if !final_loss.is_finite() || state.w.iter().any(|w| !w.is_finite()) {
        return Err(Error::Training(format!(
            "{} produced non-finite parameters",
            params.solver
        )));
    }
    Ok(LogRegModel {
        weights: state.w,
        bias: state.b,
        solver: params.solver,
        l2_lambda: params.l2_lambda,
        converged: state.converged,
        iterations: state.iterations,
        final_loss,
    })
}

struct SolverState {
    w: Vec<f64>,
    b: f64,
    converged: bool,
    iterations: usize,
}

/// Armijo backtracking along `-direction` starting from step `t0`.
#[allow(clippy::too_many_arguments)]
fn backtrack(
    data: &[LabeledSample],
    lambda: f64,
    w: &[f64],
    b: f64,
    f0: f64,
    slope: f64,
    dir_w: &[f64],
    dir_b: f64,
    t0: f64,
) -> (f64, Vec<f64>, f64, f64) {
    let mut t = t0;
    loop {
        let nw: Vec<f64> = w.iter().zip(dir_w).map(|(a, g)| a - t * g).collect();
        let nb = b - t * dir_b;
        let f = logreg_objective(&nw, nb, data, lambda);
        if f <= f0 - 1e-4 * t * slope || t < 1e-20 {
            return (t, nw, nb, f);
        }
        t *= 0.5;
    }
}

fn newton(data: &[LabeledSample], d: usize, p: &LogRegParams) -> SolverState {
    let n = data.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for iter in 0..p.max_iters {
        let (gw, gb) = logreg_gradient(&w, b, data, p.l2_lambda);
        if norm(&gw, gb) < p.tol {
            return SolverState {
                w,
                b,
                converged: true,
                iterations: iter,
            };
        }
        // Hessian over [w, b]: X^T S X / n + lambda on the weight block.
        let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
        for s in data {
            let q = sigmoid(dot(&w, &s.features) + b);
            let sw = q * (1.0 - q) / n;
            for i in 0..=d {
                let xi = if i < d { s.features[i] } else { 1.0 };
                for j in 0..=i {
                    let xj = if j < d { s.features[j] } else { 1.0 };
                    h[(i, j)] += sw * xi * xj;
                }
            }
        }
        for i in 0..=d {
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
            }
            if i < d {
                h[(i, i)] += p.l2_lambda;
            }
            h[(i, i)] += 1e-12;
        }
        let g = DVector::from_iterator(d + 1, gw.iter().copied().chain([gb]));
        let step = match h.cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone(),
        };
        let dir_w: Vec<f64> = step.iter().take(d).copied().collect();
        let dir_b = step[d];
        let slope = g.dot(&step);
        // Inside the quadratic region the predicted decrease is below what
        // f64 can resolve in the loss, so Armijo would stall; take the full step.
        if slope < 1e-12 {
            for (wi, di) in w.iter_mut().zip(&dir_w) {
                *wi -= di;
            }
            b -= dir_b;
            continue;
        }
        let f0 = logreg_objective(&w, b, data, p.l2_lambda);
        let (_, nw, nb, _) = backtrack(data, p.l2_lambda, &w, b, f0, slope, &dir_w, dir_b, 1.0);
        w = nw;
        b = nb;
    }
    let (gw, gb) = logreg_gradient(&w, b, data, p.l2_lambda);
    SolverState {
        converged: norm(&gw, gb) < p.tol,
        w,
        b,
        iterations: p.max_iters,
    }
}

fn gradient_descent(data: &[LabeledSample], d: usize, p: &LogRegParams) -> SolverState {
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut t = 1.0;
    // Trace bound on the Hessian's largest eigenvalue.
    let lipschitz = 0.25 * data
        .iter()
        .map(|s| s.features.iter().map(|x| x * x).sum::<f64>() + 1.0)
        .sum::<f64>()
        / data.len() as f64
        + p.l2_lambda;
    let t_floor = 1.0 / lipschitz;
    for iter in 0..p.max_iters {
        let (gw, gb) = logreg_gradient(&w, b, data, p.l2_lambda);
        let gnorm = norm(&gw, gb);
        if gnorm < p.tol {
            return SolverState {
                w,
                b,
                converged: true,
                iterations: iter,
            };
        }
        let f0 = logreg_objective(&w, b, data, p.l2_lambda);
        let (used, nw, nb, _) =
            backtrack(data, p.l2_lambda, &w, b, f0, gnorm * gnorm, &gw, gb, t * 2.0);
        // Near the optimum the Armijo decrease drops below f64 resolution and
        // backtracking collapses; 1/L always descends, so never go below it.
        if used < t_floor {
            t = t_floor;
            w.iter_mut().zip(&gw).for_each(|(a, g)| *a -= t * g);
            b -= t * gb;
        } else {
            t = used;
            w = nw;
            b = nb;
        }
    }
    let (gw, gb) = logreg_gradient(&w, b, data, p.l2_lambda);
    SolverState {
        converged: norm(&gw, gb) < p.tol,
        w,
        b,
        iterations: p.max_iters,
    }
}

/// Stochastic average gradient with step 1 / L_max.
fn sag(data: &[LabeledSample], d: usize, p: &LogRegParams) -> SolverState {
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let l_max = data
        .iter()
        .map(|s| 0.25 * (s.features.iter().map(|x| x * x).sum::<f64>() + 1.0))
        .fold(0.0, f64::max)
        + p.l2_lambda;
    let step = 1.0 / l_max;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut memory = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut n_seen = 0usize;
    let mut sum_w = vec![0.0; d];
    let mut sum_b = 0.0;
    for epoch in 0..p.max_iters {
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let s = &data[i];
            let r = sigmoid(dot(&w, &s.features) + b) - s.label.as_f64();
            let delta = r - memory[i];
            memory[i] = r;
            if !seen[i] {
                seen[i] = true;
                n_seen += 1;
            }
            for (acc, x) in sum_w.iter_mut().zip(&s.features) {
                *acc += delta * x;
            }
            sum_b += delta;
            let m = n_seen as f64;
            for (wj, sj) in w.iter_mut().zip(&sum_w) {
                *wj -= step * (sj / m + p.l2_lambda * *wj);
            }
            b -= step * sum_b / m;
        }
        let (gw, gb) = logreg_gradient(&w, b, data, p.l2_lambda);
        if norm(&gw, gb) < p.tol {
            return SolverState {
                w,
                b,
                converged: true,
                iterations: epoch + 1,
            };
        }
    }
    SolverState {
        w,
        b,
        converged: false,
        iterations: p.max_iters,
    }
}
