//! Multinomial logistic regression trained by full-batch gradient descent.
//!
//! Objective: mean cross-entropy + `(l2 / 2) * |W|^2`; the bias is not
//! penalized. Weights start at zero so training is deterministic.

use rayon::prelude::*;
use serde::Serialize;

use super::{check_dim, LabeledVectors, ProbPrediction};
use crate::error::{Error, Result};

const MAX_LR_HALVINGS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRegParams {
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            l2: 1e-4,
            lr: 0.1,
            epochs: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub dim: usize,
    pub n_classes: usize,
    /// `n_classes x dim` weights followed by `n_classes` biases.
    pub theta: Vec<f64>,
    /// Learning rate actually used after any halvings.
    pub lr_used: f64,
    /// Objective value after each epoch.
    pub loss_history: Vec<f64>,
}

impl LogisticRegression {
    pub fn zeros(dim: usize, n_classes: usize) -> Self {
        LogisticRegression {
            dim,
            n_classes,
            theta: vec![0.0; n_classes * (dim + 1)],
            lr_used: 0.0,
            loss_history: Vec::new(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<ProbPrediction>> {
        logreg_predict(self, x)
    }
}

fn softmax_row(theta: &[f64], dim: usize, n_classes: usize, x: &[f64], out: &mut [f64]) {
    let bias = &theta[n_classes * dim..];
    for c in 0..n_classes {
        let w = &theta[c * dim..(c + 1) * dim];
        out[c] = bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
}

/// Objective and its gradient with respect to `theta`.
pub fn loss_and_grad(theta: &[f64], data: &LabeledVectors, l2: f64) -> (f64, Vec<f64>) {
    let (dim, nc, m) = (data.dim, data.n_classes(), data.len());
    let mut grad = vec![0.0; theta.len()];
    let mut probs = vec![0.0; nc];
    let mut loss = 0.0;
    for i in 0..m {
        let x = data.row(i);
        softmax_row(theta, dim, nc, x, &mut probs);
        let y = data.y[i];
        loss -= probs[y].max(f64::MIN_POSITIVE).ln();
        for c in 0..nc {
            let err = probs[c] - if c == y { 1.0 } else { 0.0 };
            let g = &mut grad[c * dim..(c + 1) * dim];
            for (gk, xk) in g.iter_mut().zip(x) {
                *gk += err * xk;
            }
            grad[nc * dim + c] += err;
        }
    }
    let scale = 1.0 / m as f64;
    loss *= scale;
    for g in &mut grad {
        *g *= scale;
    }
    let w = &theta[..nc * dim];
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, v) in grad[..nc * dim].iter_mut().zip(w) {
        *g += l2 * v;
    }
    (loss, grad)
}

/// Runs gradient descent at `lr`; `None` if the objective ever increases.
fn descend(data: &LabeledVectors, params: &LogRegParams, lr: f64, strict: bool) -> Option<LogisticRegression> {
    let mut model = LogisticRegression::zeros(data.dim, data.n_classes());
    let (mut loss, mut grad) = loss_and_grad(&model.theta, data, params.l2);
    for _ in 0..params.epochs {
        for (t, g) in model.theta.iter_mut().zip(&grad) {
            *t -= lr * g;
        }
        let (next_loss, next_grad) = loss_and_grad(&model.theta, data, params.l2);
        if strict && !(next_loss <= loss) {
            return None;
        }
        loss = next_loss;
        grad = next_grad;
        model.loss_history.push(loss);
    }
    model.lr_used = lr;
    Some(model)
}

pub fn logreg_fit(train: &LabeledVectors, params: &LogRegParams) -> Result<LogisticRegression> {
    let mut present = vec![false; train.n_classes()];
    for &y in &train.y {
        present[y] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClassTraining);
    }
    if !(params.lr > 0.0) || !(params.l2 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "logistic regression needs lr > 0 and l2 >= 0, got lr={} l2={}",
            params.lr, params.l2
        )));
    }
    let mut lr = params.lr;
    for _ in 0..MAX_LR_HALVINGS {
        if let Some(model) = descend(train, params, lr, true) {
            return Ok(model);
        }
        lr /= 2.0;
        log::debug!("logistic regression loss increased; retrying with lr={lr}");
    }
    // Out of halvings: train at the smallest rate without the monotonicity check.
    Ok(descend(train, params, lr, false).expect("non-strict descent always completes"))
}

pub fn logreg_predict(model: &LogisticRegression, x: &[f64]) -> Result<Vec<ProbPrediction>> {
    let m = check_dim(x, model.dim)?;
    Ok((0..m)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; model.n_classes];
            softmax_row(
                &model.theta,
                model.dim,
                model.n_classes,
                &x[i * model.dim..(i + 1) * model.dim],
                &mut out,
            );
            ProbPrediction(out)
        })
        .collect())
}
