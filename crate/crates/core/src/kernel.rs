//! Gaussian kernel over a symmetrized NCD matrix.
//!
//! Two readings of "distance between distances" are supported:
//!
//! * [`KernelMode::RowFeature`]: each sequence is represented by its row of
//!   the distance matrix and `K[i][j] = exp(-|row_i - row_j|^2 / sigma2)`.
//!   This is a Gaussian kernel on finite vectors and therefore PSD.
//! * [`KernelMode::DistanceSubstitution`]: `K[i][j] = exp(-D[i][j]^2 / sigma2)`.
//!   Not PSD in general.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::compress::CompressorSpec;
use crate::error::{Error, Result};
use crate::ncd::DistanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    #[default]
    RowFeature,
    DistanceSubstitution,
}

impl KernelMode {
    pub fn tag(self) -> u8 {
        match self {
            KernelMode::RowFeature => 0,
            KernelMode::DistanceSubstitution => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(KernelMode::RowFeature),
            1 => Some(KernelMode::DistanceSubstitution),
            _ => None,
        }
    }
}

impl fmt::Display for KernelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelMode::RowFeature => "row_feature",
            KernelMode::DistanceSubstitution => "distance_substitution",
        })
    }
}

impl FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row_feature" | "row" => Ok(KernelMode::RowFeature),
            "distance_substitution" | "entry" => Ok(KernelMode::DistanceSubstitution),
            other => Err(Error::InvalidParameter(format!("unknown kernel mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaPolicy {
    #[default]
    MedianHeuristic,
    Fixed(f64),
}

impl fmt::Display for SigmaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaPolicy::MedianHeuristic => f.write_str("median"),
            SigmaPolicy::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for SigmaPolicy {
    type Err = Error;

    /// `median` or a positive number (interpreted as sigma squared).
    fn from_str(s: &str) -> Result<Self> {
        if s == "median" {
            return Ok(SigmaPolicy::MedianHeuristic);
        }
        s.parse::<f64>()
            .map(SigmaPolicy::Fixed)
            .map_err(|_| Error::InvalidParameter(format!("bad sigma `{s}`: expected `median` or a number")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub n: usize,
    pub values: Vec<f64>,
    pub sigma2: f64,
    pub mode: KernelMode,
    pub ids: Vec<String>,
    /// Compressor the underlying distances came from, when known.
    pub spec: Option<CompressorSpec>,
}

impl KernelMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Squared Euclidean distance with four independent accumulators.
#[inline]
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in ca.by_ref().zip(cb.by_ref()) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Pairwise squared distances between the rows of a row-major
/// `rows x dim` feature matrix. Exactly symmetric, zero diagonal.
pub fn pairwise_sq_distances(features: &[f64], rows: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * rows];
    out.par_chunks_mut(rows).enumerate().for_each(|(i, row)| {
        let a = &features[i * dim..(i + 1) * dim];
        for (j, slot) in row.iter_mut().enumerate().skip(i + 1) {
            *slot = squared_euclidean(a, &features[j * dim..(j + 1) * dim]);
        }
    });
    for i in 0..rows {
        for j in 0..i {
            out[i * rows + j] = out[j * rows + i];
        }
    }
    out
}

/// Squared distances between every row of `a` (`m x dim`) and every row of
/// `b` (`p x dim`), as an `m x p` row-major matrix.
pub fn cross_sq_distances(a: &[f64], m: usize, b: &[f64], p: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * p];
    out.par_chunks_mut(p.max(1)).enumerate().for_each(|(i, row)| {
        let x = &a[i * dim..(i + 1) * dim];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = squared_euclidean(x, &b[j * dim..(j + 1) * dim]);
        }
    });
    out
}

/// Median of the strict upper triangle of an `n x n` matrix (mean of the
/// two middle values for an even count).
pub fn upper_median(values: &[f64], n: usize) -> Option<f64> {
    let mut upper: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| values[i * n + j])
        .collect();
    if upper.is_empty() {
        return None;
    }
    upper.sort_unstable_by(f64::total_cmp);
    let m = upper.len();
    Some(if m % 2 == 1 {
        upper[m / 2]
    } else {
        (upper[m / 2 - 1] + upper[m / 2]) / 2.0
    })
}

/// The squared "distance" the kernel exponentiates, for every pair.
pub fn kernel_sq_distances(d: &DistanceMatrix, mode: KernelMode) -> Vec<f64> {
    match mode {
        KernelMode::RowFeature => pairwise_sq_distances(&d.values, d.n, d.n),
        KernelMode::DistanceSubstitution => d.values.iter().map(|v| v * v).collect(),
    }
}

fn sigma_from_sq(sq: &[f64], n: usize, policy: SigmaPolicy) -> Result<f64> {
    let sigma2 = match policy {
        SigmaPolicy::Fixed(v) => v,
        SigmaPolicy::MedianHeuristic => upper_median(sq, n).ok_or(Error::TooFewRecords {
            needed: 2,
            got: n,
        })?,
    };
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::NonPositiveSigma(sigma2));
    }
    Ok(sigma2)
}

pub fn select_sigma2(d: &DistanceMatrix, policy: SigmaPolicy, mode: KernelMode) -> Result<f64> {
    if let SigmaPolicy::Fixed(_) = policy {
        return sigma_from_sq(&[], d.n, policy);
    }
    if !d.symmetric {
        return Err(Error::AsymmetricInput);
    }
    sigma_from_sq(&kernel_sq_distances(d, mode), d.n, policy)
}

/// `exp(-sq / sigma2)` entry-wise with the diagonal pinned to 1.
pub fn kernel_from_sq(sq: &[f64], n: usize, sigma2: f64) -> Vec<f64> {
    let mut values: Vec<f64> = sq.iter().map(|s| (-s / sigma2).exp()).collect();
    for i in 0..n {
        values[i * n + i] = 1.0;
    }
    values
}

pub fn gaussian_kernel(d: &DistanceMatrix, sigma2: f64, mode: KernelMode) -> Result<KernelMatrix> {
    if !d.symmetric {
        return Err(Error::AsymmetricInput);
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::NonPositiveSigma(sigma2));
    }
    let sq = kernel_sq_distances(d, mode);
    Ok(build(d, sq, sigma2, mode))
}

/// Selects sigma squared and builds the kernel, computing the pairwise
/// squared distances only once.
pub fn gaussian_kernel_with_policy(
    d: &DistanceMatrix,
    policy: SigmaPolicy,
    mode: KernelMode,
) -> Result<KernelMatrix> {
    if !d.symmetric {
        return Err(Error::AsymmetricInput);
    }
    let sq = kernel_sq_distances(d, mode);
    let sigma2 = sigma_from_sq(&sq, d.n, policy)?;
    Ok(build(d, sq, sigma2, mode))
}

fn build(d: &DistanceMatrix, sq: Vec<f64>, sigma2: f64, mode: KernelMode) -> KernelMatrix {
    KernelMatrix {
        n: d.n,
        values: kernel_from_sq(&sq, d.n, sigma2),
        sigma2,
        mode,
        ids: d.ids.clone(),
        spec: Some(d.spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncd::ConcatMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sym(n: usize, values: Vec<f64>) -> DistanceMatrix {
        DistanceMatrix {
            n,
            values,
            symmetric: true,
            spec: CompressorSpec::gzip(),
            concat_mode: ConcatMode::Direct,
            ids: (0..n).map(|i| format!("r{i}")).collect(),
        }
    }

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = rng.gen_range(0.0..0.1);
            for j in 0..i {
                let x = rng.gen_range(0.0..1.2);
                v[i * n + j] = x;
                v[j * n + i] = x;
            }
        }
        sym(n, v)
    }

    #[test]
    fn fixed_sigma_passes_through() {
        let d = sym(2, vec![0.0, 0.5, 0.5, 0.0]);
        let s = select_sigma2(&d, SigmaPolicy::Fixed(2.0), KernelMode::RowFeature).unwrap();
        assert_eq!(s, 2.0);
        assert!(matches!(
            select_sigma2(&d, SigmaPolicy::Fixed(0.0), KernelMode::RowFeature),
            Err(Error::NonPositiveSigma(_))
        ));
    }

    #[test]
    fn median_of_three_row_distances() {
        let d = sym(
            3,
            vec![
                0.0, 0.3, 0.9, //
                0.3, 0.0, 0.6, //
                0.9, 0.6, 0.0,
            ],
        );
        // Brute force over the three row pairs.
        let rows = [[0.0, 0.3, 0.9], [0.3, 0.0, 0.6], [0.9, 0.6, 0.0]];
        let sq = |a: [f64; 3], b: [f64; 3]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
        let mut pairs = [sq(rows[0], rows[1]), sq(rows[0], rows[2]), sq(rows[1], rows[2])];
        pairs.sort_by(f64::total_cmp);
        let got = select_sigma2(&d, SigmaPolicy::MedianHeuristic, KernelMode::RowFeature).unwrap();
        assert!((got - pairs[1]).abs() < 1e-15, "{got} vs {}", pairs[1]);

        let got = select_sigma2(&d, SigmaPolicy::MedianHeuristic, KernelMode::DistanceSubstitution)
            .unwrap();
        assert!((got - 0.36).abs() < 1e-15);
    }

    #[test]
    fn identical_rows_degenerate() {
        let d = sym(3, vec![0.2; 9]);
        assert!(matches!(
            select_sigma2(&d, SigmaPolicy::MedianHeuristic, KernelMode::RowFeature),
            Err(Error::NonPositiveSigma(_))
        ));
    }

    #[test]
    fn median_needs_two_records() {
        let d = sym(1, vec![0.1]);
        assert!(select_sigma2(&d, SigmaPolicy::MedianHeuristic, KernelMode::RowFeature).is_err());
    }

    #[test]
    fn asymmetric_input_rejected() {
        let mut d = sym(2, vec![0.0, 0.4, 0.2, 0.0]);
        d.symmetric = false;
        assert!(matches!(
            gaussian_kernel(&d, 1.0, KernelMode::RowFeature),
            Err(Error::AsymmetricInput)
        ));
    }

    #[test]
    fn kernel_values() {
        // Rows 0 and 1 identical; row 2 at squared distance 2 from both.
        let d = sym(
            3,
            vec![
                0.0, 0.0, 1.0, //
                0.0, 0.0, 1.0, //
                1.0, 1.0, 0.0,
            ],
        );
        let k = gaussian_kernel(&d, 3.0, KernelMode::RowFeature).unwrap();
        assert_eq!(k.get(0, 1), 1.0);
        // |r0 - r2|^2 = 1 + 1 + 1 = 3 = sigma2
        assert!((k.get(0, 2) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k.get(0, 2) - 0.36787944117144233).abs() < 1e-15);
        for i in 0..3 {
            assert_eq!(k.get(i, i), 1.0);
        }
    }

    #[test]
    fn far_rows_vanish() {
        let d = sym(2, vec![0.0, 1000.0, 1000.0, 0.0]);
        let k = gaussian_kernel(&d, 1.0, KernelMode::RowFeature).unwrap();
        assert_eq!(k.get(0, 1), 0.0);
    }

    #[test]
    fn monotone_in_row_distance() {
        let d = sym(
            3,
            vec![
                0.0, 0.2, 0.7, //
                0.2, 0.0, 0.5, //
                0.7, 0.5, 0.0,
            ],
        );
        let sq = kernel_sq_distances(&d, KernelMode::RowFeature);
        let k = gaussian_kernel(&d, 0.5, KernelMode::RowFeature).unwrap();
        assert!(sq[1] < sq[2]);
        assert!(k.get(0, 1) > k.get(0, 2));
    }

    #[test]
    fn doubling_sigma_takes_square_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_sym(&mut rng, 12);
        for mode in [KernelMode::RowFeature, KernelMode::DistanceSubstitution] {
            let k1 = gaussian_kernel(&d, 0.7, mode).unwrap();
            let k2 = gaussian_kernel(&d, 1.4, mode).unwrap();
            for (a, b) in k1.values.iter().zip(&k2.values) {
                assert!((b - a.sqrt()).abs() <= 1e-12 * b.abs());
            }
        }
    }

    #[test]
    fn policy_path_matches_two_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_sym(&mut rng, 15);
        for mode in [KernelMode::RowFeature, KernelMode::DistanceSubstitution] {
            let s = select_sigma2(&d, SigmaPolicy::MedianHeuristic, mode).unwrap();
            let a = gaussian_kernel(&d, s, mode).unwrap();
            let b = gaussian_kernel_with_policy(&d, SigmaPolicy::MedianHeuristic, mode).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn kernel_invariants_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_sym(&mut rng, 20);
        let k = gaussian_kernel_with_policy(&d, SigmaPolicy::MedianHeuristic, KernelMode::RowFeature)
            .unwrap();
        for i in 0..20 {
            assert_eq!(k.get(i, i), 1.0);
            for j in 0..20 {
                assert_eq!(k.get(i, j), k.get(j, i));
                assert!(k.get(i, j) > 0.0 && k.get(i, j) <= 1.0);
            }
        }
    }

    #[test]
    fn sq_euclid_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for len in [0, 1, 3, 4, 7, 33] {
            let a: Vec<f64> = (0..len).map(|_| rng.gen()).collect();
            let b: Vec<f64> = (0..len).map(|_| rng.gen()).collect();
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            assert!((squared_euclidean(&a, &b) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_policy_parses() {
        assert_eq!("median".parse::<SigmaPolicy>().unwrap(), SigmaPolicy::MedianHeuristic);
        assert_eq!("1.5".parse::<SigmaPolicy>().unwrap(), SigmaPolicy::Fixed(1.5));
        assert!("wide".parse::<SigmaPolicy>().is_err());
    }
}
