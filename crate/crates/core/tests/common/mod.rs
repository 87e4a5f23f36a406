//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::io::Write;
use std::process::{Command, Stdio};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Container length produced by a reference compressor binary.
pub fn binary_len(program: &str, data: &[u8]) -> u64 {
    let args: &[&str] = match program {
        "gzip" => &["-9", "-n", "-c"],
        "bzip2" => &["-9", "-c"],
        other => panic!("no oracle for {other}"),
    };
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap_or_else(|e| panic!("cannot run {program}: {e}"));
    let mut stdin = child.stdin.take().unwrap();
    let payload = data.to_vec();
    // Feed stdin from a thread so large inputs cannot deadlock on a full pipe.
    let writer = std::thread::spawn(move || stdin.write_all(&payload));
    let out = child.wait_with_output().unwrap();
    writer.join().unwrap().unwrap();
    assert!(out.status.success(), "{program} failed");
    out.stdout.len() as u64
}

/// Brute-force NCD matrix: one external process per compression.
pub fn brute_force_ncd(program: &str, seqs: &[Vec<u8>]) -> Vec<f64> {
    let n = seqs.len();
    let lens: Vec<u64> = seqs.iter().map(|s| binary_len(program, s)).collect();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut xy = seqs[i].clone();
            xy.extend_from_slice(&seqs[j]);
            let lxy = binary_len(program, &xy) as f64;
            let lo = lens[i].min(lens[j]) as f64;
            let hi = lens[i].max(lens[j]) as f64;
            out.push((lxy - lo) / hi);
        }
    }
    out
}

/// Deterministic corpus mixing random, repetitive and mutated sequences.
pub fn corpus(seed: u64, count: usize) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabets: [&[u8]; 3] = [b"ACGT", b"ACDEFGHIKLMNPQRSTVWY", b"acgtn"];
    let mut out: Vec<Vec<u8>> = Vec::with_capacity(count);
    for k in 0..count {
        let alpha = alphabets[rng.gen_range(0..alphabets.len())];
        let len = rng.gen_range(1..1500);
        let seq = match k % 4 {
            // Mutated copy of an earlier sequence.
            3 if k > 0 => {
                let mut s = out[rng.gen_range(0..k)].clone();
                for b in s.iter_mut() {
                    if rng.gen_bool(0.05) {
                        *b = alpha[rng.gen_range(0..alpha.len())];
                    }
                }
                s
            }
            // Tandem repeat.
            2 => {
                let unit: Vec<u8> = (0..rng.gen_range(1..12)).map(|_| alpha[rng.gen_range(0..alpha.len())]).collect();
                unit.iter().copied().cycle().take(len).collect()
            }
            _ => (0..len).map(|_| alpha[rng.gen_range(0..alpha.len())]).collect(),
        };
        out.push(seq);
    }
    out
}

/// Cyclic Jacobi eigensolver for a dense symmetric matrix. Returns
/// eigenvalues in non-increasing order with eigenvectors as columns of a
/// row-major `n x n` matrix.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum();
        let scale: f64 = m.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[y * n + y].total_cmp(&m[x * n + x]));
    let values = order.iter().map(|&k| m[k * n + k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + col] = v[i * n + k];
        }
    }
    (values, vectors)
}

/// `H K H` with `H = I - 11^T / n`, by explicit matrix products.
pub fn center_oracle(k: &[f64], n: usize) -> Vec<f64> {
    let h: Vec<f64> = (0..n * n)
        .map(|idx| if idx / n == idx % n { 1.0 } else { 0.0 } - 1.0 / n as f64)
        .collect();
    let mul = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for l in 0..n {
                let ail = a[i * n + l];
                for j in 0..n {
                    out[i * n + j] += ail * b[l * n + j];
                }
            }
        }
        out
    };
    mul(&mul(&h, k), &h)
}

/// Gaussian kernel over random points, with bandwidth tied to the spread.
pub fn random_psd_kernel(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let dim = rng.gen_range(2..6);
    let x: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let sigma2 = rng.gen_range(0.5..3.0);
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d: f64 = (0..dim).map(|t| (x[i * dim + t] - x[j * dim + t]).powi(2)).sum();
            k[i * n + j] = (-d / sigma2).exp();
        }
    }
    k
}

/// Per-class precision, recall and F1 from an explicit confusion matrix.
pub struct ConfusionOracle {
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub f1_macro: f64,
}

pub fn confusion_oracle(y_true: &[usize], y_pred: &[usize], nc: usize) -> ConfusionOracle {
    let m = y_true.len();
    let mut cm = vec![vec![0usize; nc]; nc];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm[t][p] += 1;
    }
    let safe = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let mut out = ConfusionOracle {
        accuracy: (0..nc).map(|c| cm[c][c]).sum::<usize>() as f64 / m as f64,
        precision_weighted: 0.0,
        recall_weighted: 0.0,
        f1_weighted: 0.0,
        f1_macro: 0.0,
    };
    let mut macro_classes = 0;
    for c in 0..nc {
        let tp = cm[c][c] as f64;
        let support: f64 = cm[c].iter().sum::<usize>() as f64;
        let predicted: f64 = (0..nc).map(|r| cm[r][c]).sum::<usize>() as f64;
        let p = safe(tp, predicted);
        let r = safe(tp, support);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        out.precision_weighted += support / m as f64 * p;
        out.recall_weighted += support / m as f64 * r;
        out.f1_weighted += support / m as f64 * f1;
        if support > 0.0 || predicted > 0.0 {
            out.f1_macro += f1;
            macro_classes += 1;
        }
    }
    out.f1_macro /= macro_classes as f64;
    out
}

/// AUC by counting every positive/negative pair; ties count one half.
pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &pi) in positive.iter().enumerate() {
        if !pi {
            continue;
        }
        for (j, &pj) in positive.iter().enumerate() {
            if pj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
