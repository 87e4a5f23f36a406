//! Downstream classifiers: k-nearest neighbours, multinomial logistic
//! regression, Gaussian naive Bayes, and k-NN directly on NCD distances.

mod gnb;
mod knn;
mod logreg;

pub use gnb::{gnb_fit_predict, DEFAULT_VAR_FLOOR};
pub use knn::{knn_fit_predict, ncd_knn_predict, DEFAULT_K};
pub use logreg::{logreg_fit, loss_and_grad, logreg_predict, LogRegParams, LogisticRegression};

use crate::error::{Error, Result};

/// Row-major feature matrix with class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVectors {
    pub x: Vec<f64>,
    pub dim: usize,
    pub y: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledVectors {
    pub fn new(x: Vec<f64>, dim: usize, y: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if dim == 0 || x.len() != y.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: y.len() * dim,
                got: x.len(),
            });
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= class_names.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: class_names.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite feature value".into()));
        }
        Ok(LabeledVectors {
            x,
            dim,
            y,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
}

/// Class-probability vector for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbPrediction(pub Vec<f64>);

impl ProbPrediction {
    /// Most probable class; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = c;
            }
        }
        best
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

fn check_dim(test: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || test.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: test.len(),
        });
    }
    Ok(test.len() / dim)
}
