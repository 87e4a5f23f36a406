//! Per-run results, mean and sample standard deviation, JSON and table
//! rendering.
//!
//! JSON keys appear in declaration order, so identical results give
//! identical bytes. Wall-clock training times are measured on every run but
//! only written to JSON when timings are requested, since they vary between
//! otherwise identical runs.

use std::fmt::Write as _;

use serde::Serialize;

use super::experiment::{Classifier, ExperimentConfig};
use super::metrics::Metrics;
use crate::compress::CompressorSpec;
use crate::kernel::{KernelMode, SigmaPolicy};
use crate::ncd::ConcatMode;

/// What produced the rows being classified, as far as it is known.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Provenance {
    pub compressor: Option<CompressorSpec>,
    pub concat: Option<ConcatMode>,
    pub kernel_mode: Option<KernelMode>,
    /// Shared bandwidth; `None` when fitted per run or not applicable.
    pub sigma2: Option<f64>,
    pub components: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub compressor: Option<String>,
    pub concat: Option<String>,
    pub kernel_mode: Option<String>,
    pub sigma_policy: String,
    pub sigma2: Option<f64>,
    pub components: Option<usize>,
    pub center: bool,
    pub classifier: Classifier,
    pub runs: usize,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub inductive: bool,
    pub tune_k: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: Metrics,
    /// `k` actually used by k-NN classifiers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Per-run bandwidth (inductive mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    /// Per-run component count (inductive mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    /// Seconds spent in classifier training.
    #[serde(skip)]
    pub train_time_s: f64,
    #[serde(rename = "train_time_s", skip_serializing_if = "Option::is_none")]
    reported_time: Option<f64>,
}

impl RunReport {
    pub fn new(seed: u64, metrics: Metrics, train_time_s: f64) -> Self {
        RunReport {
            seed,
            metrics,
            k: None,
            sigma2: None,
            components: None,
            train_time_s,
            reported_time: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for one run.
    pub sd: f64,
}

impl Stat {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        // Rounding can push the mean a ulp outside the sample range.
        let mean = (values.iter().sum::<f64>() / n).clamp(lo, hi);
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Stat { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub accuracy: Stat,
    pub precision_weighted: Stat,
    pub recall_weighted: Stat,
    pub f1_weighted: Stat,
    pub f1_macro: Stat,
    /// Over runs where AUC is defined.
    pub roc_auc: Option<Stat>,
    #[serde(skip)]
    pub train_time_s: Stat,
    #[serde(rename = "train_time_s", skip_serializing_if = "Option::is_none")]
    reported_time: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: ConfigEcho,
    pub runs: Vec<RunReport>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    /// Builds the report from per-run results in seed order. `runs` must be
    /// non-empty.
    pub fn assemble(prov: Provenance, cfg: &ExperimentConfig, mut runs: Vec<RunReport>) -> Self {
        assert!(!runs.is_empty(), "a report needs at least one run");
        if cfg.timings {
            for r in &mut runs {
                r.reported_time = Some(r.train_time_s);
            }
        }
        let col = |f: fn(&Metrics) -> f64| -> Stat {
            Stat::of(&runs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>()).expect("non-empty")
        };
        let aucs: Vec<f64> = runs.iter().filter_map(|r| r.metrics.roc_auc).collect();
        let times: Vec<f64> = runs.iter().map(|r| r.train_time_s).collect();
        let train_time_s = Stat::of(&times).expect("non-empty");
        let aggregate = Aggregate {
            accuracy: col(|m| m.accuracy),
            precision_weighted: col(|m| m.precision_weighted),
            recall_weighted: col(|m| m.recall_weighted),
            f1_weighted: col(|m| m.f1_weighted),
            f1_macro: col(|m| m.f1_macro),
            roc_auc: Stat::of(&aucs),
            train_time_s,
            reported_time: cfg.timings.then_some(train_time_s),
        };
        let config = ConfigEcho {
            compressor: prov.compressor.map(|c| c.to_string()),
            concat: prov.concat.map(|c| c.to_string()),
            kernel_mode: prov.kernel_mode.map(|m| m.to_string()),
            sigma_policy: match cfg.sigma {
                SigmaPolicy::MedianHeuristic => "median".into(),
                SigmaPolicy::Fixed(_) => "fixed".into(),
            },
            sigma2: prov.sigma2.or(match cfg.sigma {
                SigmaPolicy::Fixed(v) if !cfg.classifier.uses_distances() => Some(v),
                _ => None,
            }),
            components: prov.components,
            center: cfg.center,
            classifier: cfg.classifier,
            runs: runs.len(),
            base_seed: cfg.base_seed,
            seeds: runs.iter().map(|r| r.seed).collect(),
            inductive: cfg.inductive,
            tune_k: cfg.tune_k,
        };
        EvalReport {
            config,
            runs,
            aggregate,
        }
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    /// Aligned plain-text table: one row per metric, mean and SD, then one
    /// column per run. Always includes training time.
    pub fn to_table(&self) -> String {
        let a = &self.aggregate;
        let mut rows: Vec<(&str, Option<Stat>, Vec<Option<f64>>)> = vec![
            ("accuracy", Some(a.accuracy), self.per_run(|m| Some(m.accuracy))),
            ("precision_w", Some(a.precision_weighted), self.per_run(|m| Some(m.precision_weighted))),
            ("recall_w", Some(a.recall_weighted), self.per_run(|m| Some(m.recall_weighted))),
            ("f1_weighted", Some(a.f1_weighted), self.per_run(|m| Some(m.f1_weighted))),
            ("f1_macro", Some(a.f1_macro), self.per_run(|m| Some(m.f1_macro))),
            ("roc_auc", a.roc_auc, self.per_run(|m| m.roc_auc)),
        ];
        rows.push((
            "train_time_s",
            Some(a.train_time_s),
            self.runs.iter().map(|r| Some(r.train_time_s)).collect(),
        ));

        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut header = vec!["metric".to_string(), "mean".into(), "sd".into()];
        header.extend(self.runs.iter().map(|r| format!("seed {}", r.seed)));
        let mut grid = vec![header];
        for (name, stat, values) in rows {
            let mut line = vec![
                name.to_string(),
                cell(stat.map(|s| s.mean)),
                cell(stat.map(|s| s.sd)),
            ];
            line.extend(values.into_iter().map(cell));
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();

        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(
            out,
            "classifier {}  runs {}  compressor {}  kernel {}  sigma2 {}  q {}",
            c.classifier,
            c.runs,
            c.compressor.as_deref().unwrap_or("-"),
            c.kernel_mode.as_deref().unwrap_or("-"),
            c.sigma2.map_or_else(|| "-".to_string(), |v| format!("{v:.6}")),
            c.components.map_or_else(|| "-".to_string(), |v| v.to_string()),
        );
        for line in &grid {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    if i == 0 {
                        format!("{s:<w$}", w = widths[i])
                    } else {
                        format!("{s:>w$}", w = widths[i])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    fn per_run(&self, f: fn(&Metrics) -> Option<f64>) -> Vec<Option<f64>> {
        self.runs.iter().map(|r| f(&r.metrics)).collect()
    }
}
