use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The input data violates a precondition (empty sequence, unknown label, ...).
    Data,
    /// Filesystem or stream failure.
    Io,
    /// A persisted artifact is malformed (bad magic, truncated payload, ...).
    Format,
    /// Two inputs disagree with each other (ids, dimensions, indices).
    Consistency,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("empty sequence in data row {0}")]
    EmptySequence(usize),
    #[error("sequence `{id}` is {len} bytes, above the 2^31-1 limit")]
    SequenceTooLong { id: String, len: usize },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("sequence `{0}` has no entry in the label file")]
    UnlabeledSequence(String),
    #[error("malformed FASTA at line {0}")]
    MalformedFasta(usize),
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("compression level {0} outside 1..=9")]
    InvalidLevel(u32),
    #[error("corrupt compressed stream: {0}")]
    CorruptStream(String),
    #[error("NCD undefined: both compressed lengths are zero")]
    ZeroLength,
    #[error("distance matrix is not flagged symmetric; symmetrize it first")]
    AsymmetricInput,
    #[error("kernel bandwidth must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("requested {requested} components, allowed range is 1..={max}")]
    InvalidComponents { requested: usize, max: usize },
    #[error("centered kernel has no positive eigenvalues")]
    DegenerateKernel,
    #[error("k = {k} exceeds the {available} available training points")]
    KTooLarge { k: usize, available: usize },
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("class `{0}` has no training samples")]
    EmptyClass(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for {len} records")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("train and test indices overlap at {0}")]
    OverlappingIndices(usize),
    #[error("length mismatch: {0} labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("class `{0}` has fewer than 4 members; stratified splitting needs at least 4")]
    ClassTooSmall(String),
    #[error("record ids do not match: {0}")]
    IdMismatch(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Io { .. } => ErrorKind::Io,
            Format(_) | CorruptStream(_) => ErrorKind::Format,
            IdMismatch(_)
            | DimensionMismatch { .. }
            | IndexOutOfRange { .. }
            | OverlappingIndices(_)
            | LengthMismatch(..)
            | AsymmetricInput => ErrorKind::Consistency,
            _ => ErrorKind::Data,
        }
    }
}
