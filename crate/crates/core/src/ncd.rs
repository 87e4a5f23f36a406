//! Normalized compression distance and the pairwise distance matrix.
//!
//! `NCD(x, y) = (L(xy) - min(L(x), L(y))) / max(L(x), L(y))` where `L` is a
//! compressed container length. The raw matrix is not symmetric: `L(xy)` and
//! `L(yx)` generally differ, so every ordered pair is compressed.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::compress::{compressed_len, CompressedLength, CompressorSpec, DEFLATE_WINDOW};
use crate::compress::Backend;
use crate::error::{Error, Result};
use crate::seqio::{Dataset, SequenceRecord};

/// Entries above this indicate a broken backend rather than a real distance.
pub const NCD_SANITY_MAX: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcatMode {
    /// `x ++ y`, no separator.
    #[default]
    Direct,
    /// `x ++ " " ++ y`.
    SpaceJoined,
}

impl ConcatMode {
    pub fn join_into(self, x: &[u8], y: &[u8], buf: &mut Vec<u8>) {
        buf.clear();
        buf.extend_from_slice(x);
        if self == ConcatMode::SpaceJoined {
            buf.push(b' ');
        }
        buf.extend_from_slice(y);
    }
}

impl fmt::Display for ConcatMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConcatMode::Direct => "direct",
            ConcatMode::SpaceJoined => "space",
        })
    }
}

impl FromStr for ConcatMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(ConcatMode::Direct),
            "space" | "space_joined" => Ok(ConcatMode::SpaceJoined),
            other => Err(Error::InvalidParameter(format!("unknown concat mode `{other}`"))),
        }
    }
}

/// Dense `n x n` NCD matrix, row-major, rows and columns in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub n: usize,
    pub values: Vec<f64>,
    pub symmetric: bool,
    pub spec: CompressorSpec,
    pub concat_mode: ConcatMode,
    pub ids: Vec<String>,
}

impl DistanceMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Sets every diagonal entry to zero.
    pub fn zero_diagonal(&mut self) {
        for i in 0..self.n {
            self.values[i * self.n + i] = 0.0;
        }
    }

    /// Checks shape, finiteness and the `[0, 1.5]` sanity range.
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.n * self.n || self.ids.len() != self.n {
            return Err(Error::Format(format!(
                "matrix of order {} holds {} values and {} ids",
                self.n,
                self.values.len(),
                self.ids.len()
            )));
        }
        if let Some((k, v)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > NCD_SANITY_MAX)
        {
            return Err(Error::Format(format!(
                "entry ({}, {}) = {v} outside [0, {NCD_SANITY_MAX}]",
                k / self.n,
                k % self.n
            )));
        }
        if self.symmetric {
            for i in 0..self.n {
                for j in 0..i {
                    if self.get(i, j) != self.get(j, i) {
                        return Err(Error::Format(format!(
                            "flagged symmetric but ({i}, {j}) != ({j}, {i})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn ncd(lx: CompressedLength, ly: CompressedLength, lxy: CompressedLength) -> Result<f64> {
    let (lo, hi) = if lx <= ly { (lx.0, ly.0) } else { (ly.0, lx.0) };
    if hi == 0 {
        return Err(Error::ZeroLength);
    }
    Ok((lxy.0 as f64 - lo as f64) / hi as f64)
}

/// Compressed length of every record, in dataset order.
pub fn sequence_lengths(d: &Dataset, spec: CompressorSpec) -> Vec<CompressedLength> {
    d.records
        .iter()
        .map(|r| compressed_len(spec, &r.residues))
        .collect()
}

pub fn distance_matrix(d: &Dataset, spec: CompressorSpec, mode: ConcatMode) -> Result<DistanceMatrix> {
    distance_matrix_with_progress(d, spec, mode, |_| {})
}

/// Like [`distance_matrix`], calling `progress(rows_done)` after every
/// thousandth completed row (in completion order, from worker threads).
pub fn distance_matrix_with_progress<F>(
    d: &Dataset,
    spec: CompressorSpec,
    mode: ConcatMode,
    progress: F,
) -> Result<DistanceMatrix>
where
    F: Fn(usize) + Sync,
{
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = d.len();
    warn_window_overflow(d, spec);
    let lens = sequence_lengths(d, spec);

    let mut values = vec![0.0; n * n];
    let done = AtomicUsize::new(0);
    values
        .par_chunks_mut(n)
        .enumerate()
        .for_each_init(Vec::new, |buf, (i, row)| {
            let x = &d.records[i].residues;
            for (j, out) in row.iter_mut().enumerate() {
                mode.join_into(x, &d.records[j].residues, buf);
                let lxy = compressed_len(spec, buf);
                *out = ncd(lens[i], lens[j], lxy).expect("container lengths are positive");
            }
            let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
            if finished % 1000 == 0 {
                progress(finished);
            }
        });

    Ok(DistanceMatrix {
        n,
        values,
        symmetric: false,
        spec,
        concat_mode: mode,
        ids: d.ids(),
    })
}

fn warn_window_overflow(d: &Dataset, spec: CompressorSpec) {
    if spec.backend != Backend::DeflateGzip {
        return;
    }
    let mut lens: Vec<usize> = d.records.iter().map(|r| r.residues.len()).collect();
    lens.sort_unstable();
    if let [.., a, b] = lens[..] {
        if a + b > DEFLATE_WINDOW {
            log::warn!(
                "longest pair spans {} bytes, beyond the {} byte DEFLATE window; NCD degrades for such pairs",
                a + b,
                DEFLATE_WINDOW
            );
        }
    }
}

/// Averages each entry with its transpose partner.
pub fn symmetrize(dm: &DistanceMatrix) -> DistanceMatrix {
    let n = dm.n;
    let mut values = dm.values.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (dm.get(i, j) + dm.get(j, i)) / 2.0;
            values[i * n + j] = avg;
            values[j * n + i] = avg;
        }
    }
    DistanceMatrix {
        values,
        symmetric: true,
        ids: dm.ids.clone(),
        ..*dm
    }
}

/// NCD of a single ordered pair; equals the matching matrix entry.
pub fn ncd_direct(
    s1: &SequenceRecord,
    s2: &SequenceRecord,
    spec: CompressorSpec,
    mode: ConcatMode,
) -> f64 {
    let mut buf = Vec::with_capacity(s1.residues.len() + s2.residues.len() + 1);
    mode.join_into(&s1.residues, &s2.residues, &mut buf);
    ncd(
        compressed_len(spec, &s1.residues),
        compressed_len(spec, &s2.residues),
        compressed_len(spec, &buf),
    )
    .expect("container lengths are positive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqio::Dataset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(id: &str, label: &str, residues: Vec<u8>) -> SequenceRecord {
        SequenceRecord {
            id: id.into(),
            label: label.into(),
            residues,
        }
    }

    fn random_dna(rng: &mut ChaCha8Rng, n: usize, alphabet: &[u8]) -> Vec<u8> {
        (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
    }

    fn random_dataset(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = (0..n)
            .map(|i| {
                let len = rng.gen_range(50..400);
                rec(&format!("s{i}"), "x", random_dna(&mut rng, len, b"ACGT"))
            })
            .collect();
        Dataset::from_records(records, "test").unwrap()
    }

    #[test]
    fn ncd_formula_examples() {
        let l = CompressedLength;
        assert_eq!(ncd(l(100), l(100), l(100)).unwrap(), 0.0);
        assert_eq!(ncd(l(100), l(150), l(180)).unwrap(), 80.0 / 150.0);
        assert_eq!(ncd(l(150), l(100), l(180)).unwrap(), 80.0 / 150.0);
        assert_eq!(ncd(l(77), l(77), l(154)).unwrap(), 1.0);
        assert!(matches!(ncd(l(0), l(0), l(5)), Err(Error::ZeroLength)));
    }

    fn lcg_dna(seed: u64, n: usize) -> Vec<u8> {
        let mut x = seed;
        (0..n)
            .map(|_| {
                x = x
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                b"ACGT"[(x >> 62) as usize]
            })
            .collect()
    }

    #[test]
    fn single_record_golden() {
        let d = Dataset::from_records(vec![rec("a", "x", lcg_dna(2024, 1024))], "t").unwrap();
        let dm = distance_matrix(&d, CompressorSpec::gzip(), ConcatMode::Direct).unwrap();
        assert_eq!(dm.n, 1);
        // `gzip -9 -n` gives L(s) = 385 and L(ss) = 398 for this sequence.
        assert_eq!(dm.values[0], 13.0 / 385.0);
        assert_eq!(dm.values[0], 0.033766233766233764);
    }

    #[test]
    fn identical_records_symmetric_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_dna(&mut rng, 300, b"ACGT");
        let d = Dataset::from_records(vec![rec("a", "x", s.clone()), rec("b", "x", s)], "t")
            .unwrap();
        let dm = distance_matrix(&d, CompressorSpec::gzip(), ConcatMode::Direct).unwrap();
        assert_eq!(dm.get(0, 1), dm.get(1, 0));
    }

    #[test]
    fn empty_dataset_rejected() {
        let d = Dataset::from_records(vec![], "t").unwrap();
        assert!(matches!(
            distance_matrix(&d, CompressorSpec::gzip(), ConcatMode::Direct),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn matrix_matches_uncached_pairs() {
        let d = random_dataset(11, 8);
        for spec in [CompressorSpec::gzip(), CompressorSpec::bzip2()] {
            for mode in [ConcatMode::Direct, ConcatMode::SpaceJoined] {
                let dm = distance_matrix(&d, spec, mode).unwrap();
                dm.validate().unwrap();
                for i in 0..d.len() {
                    for j in 0..d.len() {
                        let direct = ncd_direct(&d.records[i], &d.records[j], spec, mode);
                        assert_eq!(dm.get(i, j), direct);
                    }
                }
            }
        }
    }

    #[test]
    fn schedule_invariance() {
        let d = random_dataset(12, 24);
        let spec = CompressorSpec::gzip();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| distance_matrix(&d, spec, ConcatMode::Direct).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(8));
    }

    #[test]
    fn some_pair_is_asymmetric() {
        let d = random_dataset(13, 20);
        let dm = distance_matrix(&d, CompressorSpec::gzip(), ConcatMode::Direct).unwrap();
        let asym = (0..20).any(|i| (0..i).any(|j| dm.get(i, j) != dm.get(j, i)));
        assert!(asym);
    }

    #[test]
    fn self_distance_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let spec = CompressorSpec::gzip();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let len = rng.gen_range(200..4000);
            let s = rec("a", "x", random_dna(&mut rng, len, b"ACGT"));
            let v = ncd_direct(&s, &s, spec, ConcatMode::Direct);
            assert!(v >= 0.0);
            worst = worst.max(v);
        }
        assert!(worst < 0.2, "max NCD(s, s) = {worst}");
    }

    #[test]
    fn symmetrize_examples() {
        let dm = DistanceMatrix {
            n: 2,
            values: vec![0.0, 0.4, 0.2, 0.0],
            symmetric: false,
            spec: CompressorSpec::gzip(),
            concat_mode: ConcatMode::Direct,
            ids: vec!["a".into(), "b".into()],
        };
        let s = symmetrize(&dm);
        assert!(s.symmetric);
        assert_eq!(s.get(0, 1), (0.4 + 0.2) / 2.0);
        assert_eq!(s.get(1, 0), s.get(0, 1));
        assert_eq!(symmetrize(&s), s);
    }

    #[test]
    fn symmetrize_is_idempotent_on_real_matrix() {
        let d = random_dataset(15, 9);
        let dm = distance_matrix(&d, CompressorSpec::bzip2(), ConcatMode::Direct).unwrap();
        let s = symmetrize(&dm);
        s.validate().unwrap();
        for i in 0..9 {
            assert_eq!(s.get(i, i), dm.get(i, i));
        }
        assert_eq!(symmetrize(&s), s);
    }

    #[test]
    fn same_class_needs_fewer_bytes() {
        // Two synthetic families: AT-rich and GC-rich strings.
        use crate::compress::conditional_bytes;
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let at: Vec<Vec<u8>> = (0..6).map(|_| random_dna(&mut rng, 600, b"AAATTTCG")).collect();
        let gc: Vec<Vec<u8>> = (0..6).map(|_| random_dna(&mut rng, 600, b"GGGCCCAT")).collect();
        let spec = CompressorSpec::gzip();
        let len = |x: &[u8]| compressed_len(spec, x);
        let cat = |x: &[u8], y: &[u8]| len(&[x, y].concat());
        let (mut same, mut diff) = (Vec::new(), Vec::new());
        for (fam, other) in [(&at, &gc), (&gc, &at)] {
            for (a, s1) in fam.iter().enumerate() {
                for (b, s2) in fam.iter().enumerate() {
                    if a == b {
                        continue;
                    }
                    same.push(conditional_bytes(len(s1), cat(s1, s2)));
                    for s3 in other.iter() {
                        diff.push(conditional_bytes(len(s1), cat(s1, s3)));
                    }
                }
            }
        }
        let median = |v: &mut Vec<i64>| {
            v.sort_unstable();
            v[v.len() / 2]
        };
        assert!(median(&mut same) < median(&mut diff));
    }

    #[test]
    fn self_closer_than_other_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let spec = CompressorSpec::gzip();
        let mut hits = 0;
        let trials = 100;
        for _ in 0..trials {
            let s = rec("s", "a", random_dna(&mut rng, 500, b"ACGT"));
            let t = rec("t", "b", random_dna(&mut rng, 500, b"acgt"));
            if ncd_direct(&s, &s, spec, ConcatMode::Direct) < ncd_direct(&s, &t, spec, ConcatMode::Direct) {
                hits += 1;
            }
        }
        assert!(hits * 100 >= 95 * trials);
    }
}
