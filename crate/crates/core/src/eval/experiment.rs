//! End-to-end evaluation: distances, kernel, kernel PCA and a classifier
//! over repeated stratified splits.
//!
//! Transductive (default): the kernel and its eigendecomposition are
//! computed once over all rows; only the classifier sees training labels.
//! Inductive: each run fits the kernel and kernel PCA on training rows only
//! and places validation and test rows with the Nystrom extension.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{compute_metrics, Metrics};
use super::report::{EvalReport, Provenance, RunReport};
use super::split::{make_splits_from_labels, Split, DEFAULT_RUNS};
use crate::classify::{
    gnb_fit_predict, knn_fit_predict, logreg_fit, logreg_predict, ncd_knn_predict, LabeledVectors,
    LogRegParams, ProbPrediction, DEFAULT_K, DEFAULT_VAR_FLOOR,
};
use crate::compress::CompressorSpec;
use crate::error::{Error, Result};
use crate::kernel::{
    cross_sq_distances, gaussian_kernel_with_policy, kernel_from_sq, pairwise_sq_distances, upper_median,
    KernelMode, SigmaPolicy,
};
use crate::kpca::{kpca_fit, Embedding, DEFAULT_COMPONENTS};
use crate::ncd::{distance_matrix, symmetrize, ConcatMode, DistanceMatrix};
use crate::seqio::Dataset;

/// Candidate neighbour counts for validation-based tuning.
pub const TUNE_K_GRID: [usize; 8] = [1, 3, 5, 7, 9, 11, 15, 21];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Classifier {
    Knn { k: usize },
    #[serde(rename = "logreg")]
    LogReg(LogRegParams),
    Gnb { var_floor: f64 },
    NcdKnn { k: usize },
}

impl Default for Classifier {
    fn default() -> Self {
        Classifier::Knn { k: DEFAULT_K }
    }
}

impl Classifier {
    pub fn name(&self) -> &'static str {
        match self {
            Classifier::Knn { .. } => "knn",
            Classifier::LogReg(_) => "logreg",
            Classifier::Gnb { .. } => "gnb",
            Classifier::NcdKnn { .. } => "ncd-knn",
        }
    }

    /// Whether the classifier works on raw distances rather than an embedding.
    pub fn uses_distances(&self) -> bool {
        matches!(self, Classifier::NcdKnn { .. })
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Classifier {
    type Err = Error;

    /// Parses a classifier name with default hyperparameters.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(Classifier::Knn { k: DEFAULT_K }),
            "logreg" | "lr" => Ok(Classifier::LogReg(LogRegParams::default())),
            "gnb" => Ok(Classifier::Gnb {
                var_floor: DEFAULT_VAR_FLOOR,
            }),
            "ncd-knn" | "ncd_knn" => Ok(Classifier::NcdKnn { k: DEFAULT_K }),
            other => Err(Error::InvalidParameter(format!(
                "unknown classifier `{other}` (expected knn, logreg, gnb or ncd-knn)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub kernel_mode: KernelMode,
    pub sigma: SigmaPolicy,
    /// `None` means `min(rows, 64)`.
    pub components: Option<usize>,
    pub center: bool,
    pub classifier: Classifier,
    pub runs: usize,
    pub base_seed: u64,
    pub inductive: bool,
    /// Pick `k` for k-NN classifiers by validation accuracy.
    pub tune_k: bool,
    /// Include wall-clock training times in the JSON report.
    pub timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kernel_mode: KernelMode::RowFeature,
            sigma: SigmaPolicy::MedianHeuristic,
            components: None,
            center: true,
            classifier: Classifier::default(),
            runs: DEFAULT_RUNS,
            base_seed: 0,
            inductive: false,
            tune_k: false,
            timings: false,
        }
    }
}

impl ExperimentConfig {
    fn components_for(&self, rows: usize) -> usize {
        self.components.unwrap_or(rows.min(DEFAULT_COMPONENTS))
    }
}

/// Computes the NCD matrix of `d` once and evaluates on it.
pub fn run_experiment(
    d: &Dataset,
    spec: CompressorSpec,
    concat: ConcatMode,
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    let dm = distance_matrix(d, spec, concat)?;
    run_on_distances(&dm, &d.label_indices(), &d.classes, cfg)
}

/// Evaluates on a (possibly asymmetric) NCD matrix. `labels[i]` is the
/// class index of matrix row `i`.
pub fn run_on_distances(
    dm: &DistanceMatrix,
    labels: &[usize],
    class_names: &[String],
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    if labels.len() != dm.n {
        return Err(Error::LengthMismatch(labels.len(), dm.n));
    }
    let sym = if dm.symmetric { dm.clone() } else { symmetrize(dm) };
    let plan = make_splits_from_labels(labels, class_names, cfg.runs, cfg.base_seed)?;
    let mut prov = Provenance {
        compressor: Some(dm.spec),
        concat: Some(dm.concat_mode),
        kernel_mode: Some(cfg.kernel_mode),
        sigma2: None,
        components: None,
    };

    let outcomes: Vec<RunReport> = if cfg.classifier.uses_distances() {
        prov.kernel_mode = None;
        plan.runs
            .par_iter()
            .map(|s| {
                let ctx = RunContext::new(s, labels, class_names, cfg);
                ctx.evaluate(|train, eval, k| {
                    ncd_knn_predict(&sym, labels, class_names.len(), train, eval, k)
                })
            })
            .collect::<Result<_>>()?
    } else if cfg.inductive {
        plan.runs
            .par_iter()
            .map(|s| inductive_run(&sym, s, labels, class_names, cfg))
            .collect::<Result<_>>()?
    } else {
        let kernel = gaussian_kernel_with_policy(&sym, cfg.sigma, cfg.kernel_mode)?;
        let q = cfg.components_for(sym.n);
        let emb = kpca_fit(&kernel.values, kernel.n, &kernel.ids, q, cfg.center)?.embedding;
        prov.sigma2 = Some(kernel.sigma2);
        prov.components = Some(emb.q);
        embedding_runs(&emb, &plan.runs, labels, class_names, cfg)?
    };
    Ok(EvalReport::assemble(prov, cfg, outcomes))
}

/// Evaluates a precomputed embedding whose rows align with `labels`.
/// Always transductive.
pub fn run_on_embedding(
    emb: &Embedding,
    labels: &[usize],
    class_names: &[String],
    cfg: &ExperimentConfig,
    mut prov: Provenance,
) -> Result<EvalReport> {
    if labels.len() != emb.n {
        return Err(Error::LengthMismatch(labels.len(), emb.n));
    }
    if cfg.classifier.uses_distances() {
        return Err(Error::InvalidParameter(
            "ncd-knn needs a distance matrix, not an embedding".into(),
        ));
    }
    if cfg.inductive {
        return Err(Error::InvalidParameter(
            "inductive evaluation needs a distance matrix, not a fixed embedding".into(),
        ));
    }
    let plan = make_splits_from_labels(labels, class_names, cfg.runs, cfg.base_seed)?;
    prov.components = Some(emb.q);
    let outcomes = embedding_runs(emb, &plan.runs, labels, class_names, cfg)?;
    Ok(EvalReport::assemble(prov, cfg, outcomes))
}

fn embedding_runs(
    emb: &Embedding,
    runs: &[Split],
    labels: &[usize],
    class_names: &[String],
    cfg: &ExperimentConfig,
) -> Result<Vec<RunReport>> {
    runs.par_iter()
        .map(|s| {
            let ctx = RunContext::new(s, labels, class_names, cfg);
            let train = ctx.vectors(emb.gather_rows(&s.train), emb.q)?;
            let val = emb.gather_rows(&s.val);
            let test = emb.gather_rows(&s.test);
            ctx.evaluate_vectors(&train, &val, &test)
        })
        .collect()
}

fn inductive_run(
    sym: &DistanceMatrix,
    s: &Split,
    labels: &[usize],
    class_names: &[String],
    cfg: &ExperimentConfig,
) -> Result<RunReport> {
    let t = s.train.len();
    let block = |rows: &[usize]| -> Vec<f64> {
        rows.iter()
            .flat_map(|&i| s.train.iter().map(move |&j| sym.get(i, j)))
            .collect()
    };
    // Rows restricted to training columns; for row_feature these are the
    // feature vectors, for distance_substitution the distances themselves.
    let (f_train, f_val, f_test) = (block(&s.train), block(&s.val), block(&s.test));
    let (sq_train, sq_val, sq_test) = match cfg.kernel_mode {
        KernelMode::RowFeature => (
            pairwise_sq_distances(&f_train, t, t),
            cross_sq_distances(&f_val, s.val.len(), &f_train, t, t),
            cross_sq_distances(&f_test, s.test.len(), &f_train, t, t),
        ),
        KernelMode::DistanceSubstitution => {
            let sq = |v: Vec<f64>| v.into_iter().map(|x| x * x).collect::<Vec<_>>();
            (sq(f_train), sq(f_val), sq(f_test))
        }
    };
    let sigma2 = match cfg.sigma {
        SigmaPolicy::Fixed(v) => v,
        SigmaPolicy::MedianHeuristic => {
            upper_median(&sq_train, t).ok_or(Error::TooFewRecords { needed: 2, got: t })?
        }
    };
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::NonPositiveSigma(sigma2));
    }
    let k_train = kernel_from_sq(&sq_train, t, sigma2);
    let cross = |sq: &[f64]| sq.iter().map(|v| (-v / sigma2).exp()).collect::<Vec<_>>();
    let ids: Vec<String> = s.train.iter().map(|&i| sym.ids[i].clone()).collect();
    let fit = kpca_fit(&k_train, t, &ids, cfg.components_for(t), cfg.center)?;
    let q = fit.embedding.q;
    let val = fit.project(&cross(&sq_val), s.val.len())?;
    let test = fit.project(&cross(&sq_test), s.test.len())?;

    let ctx = RunContext::new(s, labels, class_names, cfg);
    let train = ctx.vectors(fit.embedding.coords, q)?;
    let mut report = ctx.evaluate_vectors(&train, &val, &test)?;
    report.sigma2 = Some(sigma2);
    report.components = Some(q);
    Ok(report)
}

struct RunContext<'a> {
    split: &'a Split,
    labels: &'a [usize],
    class_names: &'a [String],
    cfg: &'a ExperimentConfig,
}

impl<'a> RunContext<'a> {
    fn new(split: &'a Split, labels: &'a [usize], class_names: &'a [String], cfg: &'a ExperimentConfig) -> Self {
        RunContext {
            split,
            labels,
            class_names,
            cfg,
        }
    }

    fn labels_of(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    fn vectors(&self, x: Vec<f64>, dim: usize) -> Result<LabeledVectors> {
        LabeledVectors::new(x, dim, self.labels_of(&self.split.train), self.class_names.to_vec())
    }

    /// Picks `k` by validation accuracy (smallest on ties) when tuning is
    /// on, otherwise returns `k` unchanged. `predict_val(k)` scores the
    /// validation rows.
    fn choose_k<F>(&self, k: usize, predict_val: F) -> Result<usize>
    where
        F: Fn(usize) -> Result<Vec<ProbPrediction>>,
    {
        if !self.cfg.tune_k || self.split.val.is_empty() {
            return Ok(k);
        }
        let y_val = self.labels_of(&self.split.val);
        let mut best = (f64::NEG_INFINITY, k);
        for &cand in TUNE_K_GRID.iter().filter(|&&c| c <= self.split.train.len()) {
            let acc = compute_metrics(&y_val, &predict_val(cand)?)?.accuracy;
            if acc > best.0 {
                best = (acc, cand);
            }
        }
        Ok(best.1)
    }

    /// Runs a k-NN style predictor over split index sets.
    fn evaluate<F>(&self, predict: F) -> Result<RunReport>
    where
        F: Fn(&[usize], &[usize], usize) -> Result<Vec<ProbPrediction>>,
    {
        let k0 = match self.cfg.classifier {
            Classifier::Knn { k } | Classifier::NcdKnn { k } => k,
            _ => unreachable!("index-based evaluation is for k-NN classifiers"),
        };
        let k = self.choose_k(k0, |k| predict(&self.split.train, &self.split.val, k))?;
        let start = Instant::now();
        let preds = predict(&self.split.train, &self.split.test, k)?;
        let elapsed = start.elapsed().as_secs_f64();
        self.finish(preds, elapsed, Some(k))
    }

    fn evaluate_vectors(&self, train: &LabeledVectors, val: &[f64], test: &[f64]) -> Result<RunReport> {
        let (preds, elapsed, k_used) = match self.cfg.classifier {
            Classifier::Knn { k } => {
                let k = self.choose_k(k, |k| knn_fit_predict(train, val, k))?;
                let start = Instant::now();
                let preds = knn_fit_predict(train, test, k)?;
                (preds, start.elapsed().as_secs_f64(), Some(k))
            }
            Classifier::LogReg(params) => {
                let start = Instant::now();
                let model = logreg_fit(train, &params)?;
                let elapsed = start.elapsed().as_secs_f64();
                (logreg_predict(&model, test)?, elapsed, None)
            }
            Classifier::Gnb { var_floor } => {
                let start = Instant::now();
                let preds = gnb_fit_predict(train, test, var_floor)?;
                (preds, start.elapsed().as_secs_f64(), None)
            }
            Classifier::NcdKnn { .. } => unreachable!("ncd-knn runs on distances"),
        };
        self.finish(preds, elapsed, k_used)
    }

    fn finish(&self, preds: Vec<ProbPrediction>, train_time: f64, k_used: Option<usize>) -> Result<RunReport> {
        let y_test = self.labels_of(&self.split.test);
        let metrics: Metrics = compute_metrics(&y_test, &preds)?;
        let mut report = RunReport::new(self.split.seed, metrics, train_time);
        report.k = k_used;
        Ok(report)
    }
}
