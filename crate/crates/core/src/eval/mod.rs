//! Evaluation protocol: repeated stratified splits, metrics and reports.

pub mod experiment;
pub mod metrics;
pub mod report;
pub mod split;

pub use experiment::{run_experiment, run_on_distances, run_on_embedding, Classifier, ExperimentConfig};
pub use metrics::{binary_auc, compute_metrics, Metrics};
pub use report::{Aggregate, ConfigEcho, EvalReport, Provenance, RunReport, Stat};
pub use split::{make_splits, make_splits_from_labels, part_sizes, Split, SplitPlan, DEFAULT_RUNS};
