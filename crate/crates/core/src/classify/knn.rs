use std::cmp::Ordering;

use rayon::prelude::*;

use super::{check_dim, LabeledVectors, ProbPrediction};
use crate::error::{Error, Result};
use crate::kernel::squared_euclidean;
use crate::ncd::DistanceMatrix;

pub const DEFAULT_K: usize = 5;

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Vote fractions among the `k` closest candidates. `candidates` holds
/// `(distance, position)` pairs; equal distances go to the lower position.
fn vote(mut candidates: Vec<(f64, usize)>, labels: &[usize], n_classes: usize, k: usize) -> ProbPrediction {
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, by_distance_then_index);
        candidates.truncate(k);
    }
    let mut probs = vec![0.0; n_classes];
    for &(_, pos) in &candidates {
        probs[labels[pos]] += 1.0;
    }
    for p in &mut probs {
        *p /= k as f64;
    }
    ProbPrediction(probs)
}

fn check_k(k: usize, available: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if k > available {
        return Err(Error::KTooLarge { k, available });
    }
    Ok(())
}

/// Euclidean k-NN over embedding rows; `test` is row-major with
/// `train.dim` columns.
pub fn knn_fit_predict(train: &LabeledVectors, test: &[f64], k: usize) -> Result<Vec<ProbPrediction>> {
    check_k(k, train.len())?;
    let m = check_dim(test, train.dim)?;
    Ok((0..m)
        .into_par_iter()
        .map(|t| {
            let q = &test[t * train.dim..(t + 1) * train.dim];
            let cands = (0..train.len())
                .map(|i| (squared_euclidean(q, train.row(i)), i))
                .collect();
            vote(cands, &train.y, train.n_classes(), k)
        })
        .collect())
}

/// k-NN using NCD distances `dm[test][train]` directly, with no embedding.
/// `labels` holds the class index of every matrix row.
pub fn ncd_knn_predict(
    dm: &DistanceMatrix,
    labels: &[usize],
    n_classes: usize,
    train_idx: &[usize],
    test_idx: &[usize],
    k: usize,
) -> Result<Vec<ProbPrediction>> {
    let n = dm.n;
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    let mut in_train = vec![false; n];
    for &i in train_idx {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        in_train[i] = true;
    }
    for &i in test_idx {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        if in_train[i] {
            return Err(Error::OverlappingIndices(i));
        }
    }
    check_k(k, train_idx.len())?;
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    Ok(test_idx
        .par_iter()
        .map(|&t| {
            let cands = train_idx
                .iter()
                .enumerate()
                .map(|(pos, &j)| (dm.get(t, j), pos))
                .collect();
            vote(cands, &train_labels, n_classes, k)
        })
        .collect())
}
