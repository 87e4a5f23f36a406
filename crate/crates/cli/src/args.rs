use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ncdembed::classify::{LogRegParams, DEFAULT_K, DEFAULT_VAR_FLOOR};
use ncdembed::compress::{Backend, CompressorSpec};
use ncdembed::eval::{Classifier, ExperimentConfig, DEFAULT_RUNS};
use ncdembed::kernel::{KernelMode, SigmaPolicy};
use ncdembed::ncd::ConcatMode;
use ncdembed::seqio::Normalize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ncdembed", version, about = "Compression-distance embeddings and classifiers for sequence data")]
pub struct Cli {
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print sequence count, class count and length summary.
    Stats {
        input: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Dataset utilities.
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
    },
    /// Compute the pairwise NCD matrix.
    Distmat {
        input: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        ncd: NcdArgs,
        /// Output matrix file (NCDM).
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the matrix as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Symmetrize a distance matrix, build the kernel and embed with kernel PCA.
    Embed {
        /// Distance matrix file (NCDM).
        dist: PathBuf,
        #[command(flatten)]
        embed: EmbedArgs,
        /// Output embedding CSV.
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the embedding as a binary NCDE file.
        #[arg(long)]
        bin: Option<PathBuf>,
        /// Also write the kernel matrix as a binary NCDK file.
        #[arg(long)]
        kernel_out: Option<PathBuf>,
    },
    /// Evaluate a classifier over repeated stratified 60/10/30 splits.
    Eval {
        /// Embedding CSV to classify.
        #[arg(long, required_unless_present = "dist", conflicts_with = "dist")]
        embedding: Option<PathBuf>,
        /// Distance matrix (NCDM); embedded on the fly unless `--clf ncd-knn`.
        #[arg(long)]
        dist: Option<PathBuf>,
        /// Dataset supplying labels (TSV, or FASTA together with `--labels`).
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        data_args: DataArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run stats, distmat, embed and eval from a config file, reusing cached stages.
    Pipeline {
        /// INI-style `key = value` config file.
        config: PathBuf,
        /// Override a config key, e.g. `--set sigma=0.5`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Rerun every stage even when cached.
        #[arg(long)]
        force: bool,
        /// Input dataset (overrides `input`).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output directory (overrides `out_dir`).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        ncd: NcdArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetAction {
    /// Write the dataset as canonical `id<TAB>label<TAB>sequence` TSV.
    Dump {
        input: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Output file (default: stdout).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Tsv,
    Fasta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizeArg {
    Verbatim,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TuneTarget {
    K,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// `id,label` CSV (required for FASTA input).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Input format (default: from the file extension).
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// TSV column holding sequences [default: sequence].
    #[arg(long)]
    pub seq_col: Option<String>,
    /// TSV column holding class labels [default: class].
    #[arg(long)]
    pub label_col: Option<String>,
    /// TSV column holding record ids (default: row numbers).
    #[arg(long)]
    pub id_col: Option<String>,
    /// Residue normalization [default: verbatim].
    #[arg(long, value_enum)]
    pub normalize: Option<NormalizeArg>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct NcdArgs {
    /// Compressor: gzip or bz2 [default: gzip].
    #[arg(long)]
    pub compressor: Option<Backend>,
    /// Compression level 1-9 [default: 9].
    #[arg(long)]
    pub level: Option<u32>,
    /// Pair concatenation: direct or space [default: direct].
    #[arg(long)]
    pub concat: Option<ConcatMode>,
    /// Force the matrix diagonal to zero.
    #[arg(long)]
    pub zero_diagonal: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EmbedArgs {
    /// Kernel mode: row_feature or distance_substitution [default: row_feature].
    #[arg(long)]
    pub mode: Option<KernelMode>,
    /// Bandwidth sigma^2: `median` or a positive number [default: median].
    #[arg(long)]
    pub sigma: Option<SigmaPolicy>,
    /// Kernel PCA components [default: min(n, 64)].
    #[arg(long)]
    pub components: Option<usize>,
    /// Skip kernel centering.
    #[arg(long)]
    pub no_center: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    /// Classifier: knn, logreg, gnb or ncd-knn [default: knn].
    #[arg(long)]
    pub clf: Option<ClassifierName>,
    /// Neighbours for knn and ncd-knn [default: 5].
    #[arg(long)]
    pub k: Option<usize>,
    /// L2 penalty for logreg [default: 1e-4].
    #[arg(long)]
    pub l2: Option<f64>,
    /// Learning rate for logreg [default: 0.1].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Gradient descent epochs for logreg [default: 500].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Variance floor for gnb [default: 1e-9].
    #[arg(long)]
    pub var_floor: Option<f64>,
    /// Number of repeated splits [default: 5].
    #[arg(long)]
    pub runs: Option<usize>,
    /// Base seed; run r uses seed + r [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fit kernel and kernel PCA on training rows only and project the rest.
    #[arg(long)]
    pub inductive: bool,
    /// Tune a hyperparameter on the validation split (only `k`).
    #[arg(long, value_enum)]
    pub tune: Option<TuneTarget>,
    /// Include training times in the JSON report.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierName {
    Knn,
    Logreg,
    Gnb,
    NcdKnn,
}

/// Every option after defaults, config file and flags have been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub input: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub format: Option<InputFormat>,
    pub seq_col: String,
    pub label_col: String,
    pub id_col: Option<String>,
    pub normalize: Normalize,

    pub backend: Backend,
    pub level: u32,
    pub concat: ConcatMode,
    pub zero_diagonal: bool,

    pub mode: KernelMode,
    pub sigma: SigmaPolicy,
    pub components: Option<usize>,
    pub center: bool,

    pub clf: ClassifierName,
    pub k: usize,
    pub logreg: LogRegParams,
    pub var_floor: f64,
    pub runs: usize,
    pub seed: u64,
    pub inductive: bool,
    pub tune_k: bool,
    pub timings: bool,

    pub out_dir: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            input: None,
            labels: None,
            format: None,
            seq_col: "sequence".into(),
            label_col: "class".into(),
            id_col: None,
            normalize: Normalize::Verbatim,
            backend: Backend::DeflateGzip,
            level: 9,
            concat: ConcatMode::Direct,
            zero_diagonal: false,
            mode: KernelMode::RowFeature,
            sigma: SigmaPolicy::MedianHeuristic,
            components: None,
            center: true,
            clf: ClassifierName::Knn,
            k: DEFAULT_K,
            logreg: LogRegParams::default(),
            var_floor: DEFAULT_VAR_FLOOR,
            runs: DEFAULT_RUNS,
            seed: 0,
            inductive: false,
            tune_k: false,
            timings: false,
            out_dir: PathBuf::from("ncdembed-out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

fn parse_enum<T: ValueEnum>(key: &str, value: &str) -> Result<T, CliError> {
    T::from_str(value, true).map_err(|_| CliError::Config(format!("bad value `{value}` for `{key}`")))
}

impl Settings {
    /// Config keys accepted by [`Settings::set`].
    pub const KEYS: &'static [&'static str] = &[
        "input", "labels", "format", "seq_col", "label_col", "id_col", "normalize", "compressor", "level",
        "concat", "zero_diagonal", "mode", "sigma", "components", "center", "clf", "k", "l2", "lr", "epochs",
        "var_floor", "runs", "seed", "inductive", "tune", "timings", "out_dir",
    ];

    /// Applies one `key = value` pair. Relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), CliError> {
        let value = value.trim();
        let path = || base.join(value);
        match key {
            "input" => self.input = Some(path()),
            "labels" => self.labels = Some(path()),
            "format" => self.format = Some(parse_enum(key, value)?),
            "seq_col" => self.seq_col = value.into(),
            "label_col" => self.label_col = value.into(),
            "id_col" => self.id_col = (!value.is_empty()).then(|| value.into()),
            "normalize" => self.normalize = normalize(parse_enum(key, value)?),
            "compressor" => self.backend = parse(key, value)?,
            "level" => self.level = parse(key, value)?,
            "concat" => self.concat = parse(key, value)?,
            "zero_diagonal" => self.zero_diagonal = parse_bool(key, value)?,
            "mode" => self.mode = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "components" => {
                self.components = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "center" => self.center = parse_bool(key, value)?,
            "clf" => self.clf = parse_enum(key, value)?,
            "k" => self.k = parse(key, value)?,
            "l2" => self.logreg.l2 = parse(key, value)?,
            "lr" => self.logreg.lr = parse(key, value)?,
            "epochs" => self.logreg.epochs = parse(key, value)?,
            "var_floor" => self.var_floor = parse(key, value)?,
            "runs" => self.runs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "inductive" => self.inductive = parse_bool(key, value)?,
            "tune" => {
                self.tune_k = match value {
                    "" | "none" => false,
                    v => parse_enum::<TuneTarget>(key, v).map(|_| true)?,
                }
            }
            "timings" => self.timings = parse_bool(key, value)?,
            "out_dir" => self.out_dir = path(),
            _ => {
                return Err(CliError::Config(format!(
                    "unknown key `{key}`; expected one of: {}",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn apply_data(&mut self, a: &DataArgs) {
        if let Some(v) = &a.labels {
            self.labels = Some(v.clone());
        }
        if let Some(v) = a.format {
            self.format = Some(v);
        }
        if let Some(v) = &a.seq_col {
            self.seq_col = v.clone();
        }
        if let Some(v) = &a.label_col {
            self.label_col = v.clone();
        }
        if let Some(v) = &a.id_col {
            self.id_col = Some(v.clone());
        }
        if let Some(v) = a.normalize {
            self.normalize = normalize(v);
        }
    }

    pub fn apply_ncd(&mut self, a: &NcdArgs) {
        if let Some(v) = a.compressor {
            self.backend = v;
        }
        if let Some(v) = a.level {
            self.level = v;
        }
        if let Some(v) = a.concat {
            self.concat = v;
        }
        self.zero_diagonal |= a.zero_diagonal;
    }

    pub fn apply_embed(&mut self, a: &EmbedArgs) {
        if let Some(v) = a.mode {
            self.mode = v;
        }
        if let Some(v) = a.sigma {
            self.sigma = v;
        }
        if let Some(v) = a.components {
            self.components = Some(v);
        }
        if a.no_center {
            self.center = false;
        }
    }

    pub fn apply_eval(&mut self, a: &EvalArgs) {
        if let Some(v) = a.clf {
            self.clf = v;
        }
        if let Some(v) = a.k {
            self.k = v;
        }
        if let Some(v) = a.l2 {
            self.logreg.l2 = v;
        }
        if let Some(v) = a.lr {
            self.logreg.lr = v;
        }
        if let Some(v) = a.epochs {
            self.logreg.epochs = v;
        }
        if let Some(v) = a.var_floor {
            self.var_floor = v;
        }
        if let Some(v) = a.runs {
            self.runs = v;
        }
        if let Some(v) = a.seed {
            self.seed = v;
        }
        self.inductive |= a.inductive;
        self.tune_k |= a.tune.is_some();
        self.timings |= a.timings;
    }

    pub fn spec(&self) -> Result<CompressorSpec, CliError> {
        Ok(CompressorSpec::new(self.backend, self.level)?)
    }

    pub fn classifier(&self) -> Classifier {
        match self.clf {
            ClassifierName::Knn => Classifier::Knn { k: self.k },
            ClassifierName::Logreg => Classifier::LogReg(self.logreg),
            ClassifierName::Gnb => Classifier::Gnb {
                var_floor: self.var_floor,
            },
            ClassifierName::NcdKnn => Classifier::NcdKnn { k: self.k },
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            kernel_mode: self.mode,
            sigma: self.sigma,
            components: self.components,
            center: self.center,
            classifier: self.classifier(),
            runs: self.runs,
            base_seed: self.seed,
            inductive: self.inductive,
            tune_k: self.tune_k,
            timings: self.timings,
        }
    }
}

fn normalize(n: NormalizeArg) -> Normalize {
    match n {
        NormalizeArg::Verbatim => Normalize::Verbatim,
        NormalizeArg::Upper => Normalize::Upper,
    }
}
