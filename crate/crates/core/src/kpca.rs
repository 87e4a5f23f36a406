//! Kernel PCA: double-centering and eigendecomposition of a kernel matrix.
//!
//! Coordinates are scaled by the square root of their eigenvalue, so the
//! embedding's Gram matrix reproduces the (truncated) centered kernel and
//! Euclidean distances in the embedding match feature-space distances.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;

/// Eigenpairs at or below this fraction of the largest eigenvalue are dropped.
pub const EIGEN_DROP_RATIO: f64 = 1e-10;

pub const DEFAULT_COMPONENTS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub n: usize,
    pub q: usize,
    /// `n x q`, row-major, rows aligned with `ids`.
    pub coords: Vec<f64>,
    /// Non-increasing, strictly positive.
    pub eigenvalues: Vec<f64>,
    pub ids: Vec<String>,
}

impl Embedding {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.q..(i + 1) * self.q]
    }

    /// Rows `idx` as a contiguous row-major block.
    pub fn gather_rows(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect()
    }

    /// Re-orders rows to follow `ids`. Fails unless `ids` is a permutation
    /// of the embedding's ids.
    pub fn aligned_to(&self, ids: &[String]) -> Result<Embedding> {
        if ids.len() != self.n {
            return Err(Error::IdMismatch(format!(
                "embedding has {} rows, dataset has {} records",
                self.n,
                ids.len()
            )));
        }
        let lookup: std::collections::HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut coords = Vec::with_capacity(self.coords.len());
        for id in ids {
            let &i = lookup
                .get(id.as_str())
                .ok_or_else(|| Error::IdMismatch(format!("`{id}` missing from embedding")))?;
            coords.extend_from_slice(self.row(i));
        }
        Ok(Embedding {
            coords,
            ids: ids.to_vec(),
            eigenvalues: self.eigenvalues.clone(),
            ..*self
        })
    }
}

/// Row means of a symmetric `n x n` matrix (equal to its column means).
fn row_means(k: &[f64], n: usize) -> Vec<f64> {
    k.chunks_exact(n).map(|r| r.iter().sum::<f64>() / n as f64).collect()
}

/// `K - 1K - K1 + 1K1` with `1` the matrix of `1/n` entries.
pub fn center_kernel(k: &[f64], n: usize) -> Vec<f64> {
    let means = row_means(k, n);
    let grand = means.iter().sum::<f64>() / n as f64;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // `means[i] + means[j]` is commutative, so symmetry is exact.
            out[i * n + j] = k[i * n + j] - (means[i] + means[j]) + grand;
        }
    }
    out
}

/// A fitted kernel PCA, able to place new points given their kernel values
/// against the fitting set.
#[derive(Debug, Clone)]
pub struct KpcaFit {
    pub embedding: Embedding,
    /// `n x q` unit eigenvectors, row-major, sign-normalized.
    vectors: Vec<f64>,
    col_means: Vec<f64>,
    grand_mean: f64,
    centered: bool,
}

impl KpcaFit {
    /// Projects `m` new points; `cross` is `m x n` row-major, holding kernel
    /// values against the `n` fitting points. Returns `m x q` coordinates.
    pub fn project(&self, cross: &[f64], m: usize) -> Result<Vec<f64>> {
        let n = self.embedding.n;
        let q = self.embedding.q;
        if cross.len() != m * n {
            return Err(Error::DimensionMismatch {
                expected: m * n,
                got: cross.len(),
            });
        }
        let mut out = vec![0.0; m * q];
        let mut centered = vec![0.0; n];
        for (r, krow) in cross.chunks_exact(n).enumerate() {
            if self.centered {
                let mean = krow.iter().sum::<f64>() / n as f64;
                for j in 0..n {
                    centered[j] = krow[j] - (mean + self.col_means[j]) + self.grand_mean;
                }
            } else {
                centered.copy_from_slice(krow);
            }
            for c in 0..q {
                let dot: f64 = (0..n).map(|j| centered[j] * self.vectors[j * q + c]).sum();
                out[r * q + c] = dot / self.embedding.eigenvalues[c].sqrt();
            }
        }
        Ok(out)
    }
}

/// Fits kernel PCA on a symmetric `n x n` kernel given row-major.
pub fn kpca_fit(k: &[f64], n: usize, ids: &[String], q: usize, center: bool) -> Result<KpcaFit> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if q == 0 || q > n {
        return Err(Error::InvalidComponents { requested: q, max: n });
    }
    if k.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: k.len(),
        });
    }
    let col_means = row_means(k, n);
    let grand_mean = col_means.iter().sum::<f64>() / n as f64;
    let kc = if center {
        center_kernel(k, n)
    } else {
        k.to_vec()
    };

    let (values, vectors) = symmetric_eigen_desc(&kc, n)?;
    let lambda_max = values[0];
    if !(lambda_max > 0.0) {
        return Err(Error::DegenerateKernel);
    }
    let cutoff = EIGEN_DROP_RATIO * lambda_max;
    let retained = values.iter().take_while(|&&l| l > cutoff).count();
    let q_out = q.min(retained);

    let mut unit = vec![0.0; n * q_out];
    let mut coords = vec![0.0; n * q_out];
    for c in 0..q_out {
        let col: Vec<f64> = (0..n).map(|i| vectors[i * n + c]).collect();
        let sign = sign_of_dominant(&col);
        let scale = values[c].sqrt();
        for i in 0..n {
            unit[i * q_out + c] = sign * col[i];
            coords[i * q_out + c] = sign * col[i] * scale;
        }
    }

    Ok(KpcaFit {
        embedding: Embedding {
            n,
            q: q_out,
            coords,
            eigenvalues: values[..q_out].to_vec(),
            ids: ids.to_vec(),
        },
        vectors: unit,
        col_means,
        grand_mean,
        centered: center,
    })
}

pub fn kpca_embed(k: &KernelMatrix, q: usize) -> Result<Embedding> {
    kpca_fit(&k.values, k.n, &k.ids, q, true).map(|f| f.embedding)
}

/// `+1` or `-1` such that the largest-magnitude entry (first on ties)
/// becomes positive.
fn sign_of_dominant(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    sign
}

/// Eigenvalues in non-increasing order and the matching eigenvectors as
/// columns of an `n x n` row-major matrix.
pub fn symmetric_eigen_desc(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = Mat::<f64>::from_fn(n, n, |i, j| a[i * n + j]);
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::InvalidParameter(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending eigenvalues.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]).then(x.cmp(&y)));
    let values = order.iter().map(|&c| s[c]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + dst] = u[(i, src)];
        }
    }
    Ok((values, vectors))
}
