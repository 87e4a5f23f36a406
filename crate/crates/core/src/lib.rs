pub mod classify;
pub mod compress;
pub mod error;
pub mod eval;
pub mod format;
pub mod kernel;
pub mod kpca;
pub mod ncd;
pub mod seqio;

pub use error::{Error, ErrorKind, Result};
