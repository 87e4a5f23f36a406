use rayon::prelude::*;

use super::{check_dim, LabeledVectors, ProbPrediction};
use crate::error::{Error, Result};

pub const DEFAULT_VAR_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes: per-class, per-feature mean and variance (plus
/// `var_floor`), priors from class frequencies, evaluated in log space.
pub fn gnb_fit_predict(train: &LabeledVectors, test: &[f64], var_floor: f64) -> Result<Vec<ProbPrediction>> {
    let (dim, nc) = (train.dim, train.n_classes());
    let m = check_dim(test, dim)?;

    let mut counts = vec![0usize; nc];
    let mut means = vec![0.0; nc * dim];
    for i in 0..train.len() {
        let c = train.y[i];
        counts[c] += 1;
        for (acc, x) in means[c * dim..(c + 1) * dim].iter_mut().zip(train.row(i)) {
            *acc += x;
        }
    }
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(Error::EmptyClass(train.class_names[c].clone()));
    }
    for c in 0..nc {
        for v in &mut means[c * dim..(c + 1) * dim] {
            *v /= counts[c] as f64;
        }
    }
    let mut vars = vec![0.0; nc * dim];
    for i in 0..train.len() {
        let c = train.y[i];
        for k in 0..dim {
            let d = train.row(i)[k] - means[c * dim + k];
            vars[c * dim + k] += d * d;
        }
    }
    for c in 0..nc {
        for v in &mut vars[c * dim..(c + 1) * dim] {
            *v = *v / counts[c] as f64 + var_floor;
        }
    }
    let log_prior: Vec<f64> = counts
        .iter()
        .map(|&k| (k as f64 / train.len() as f64).ln())
        .collect();
    let log_norm: Vec<f64> = (0..nc)
        .map(|c| {
            vars[c * dim..(c + 1) * dim]
                .iter()
                .map(|v| -0.5 * (2.0 * std::f64::consts::PI * v).ln())
                .sum()
        })
        .collect();

    Ok((0..m)
        .into_par_iter()
        .map(|t| {
            let x = &test[t * dim..(t + 1) * dim];
            let mut logp: Vec<f64> = (0..nc)
                .map(|c| {
                    let quad: f64 = (0..dim)
                        .map(|k| {
                            let d = x[k] - means[c * dim + k];
                            d * d / vars[c * dim + k]
                        })
                        .sum();
                    log_prior[c] + log_norm[c] - 0.5 * quad
                })
                .collect();
            let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = logp.iter().map(|l| (l - max).exp()).sum();
            let lse = max + total.ln();
            for l in &mut logp {
                *l = (*l - lse).exp();
            }
            ProbPrediction(logp)
        })
        .collect())
}
