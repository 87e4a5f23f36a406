use ncdembed::{Error, ErrorKind};
use thiserror::Error;

pub const EXIT_DATA: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;
pub const EXIT_CONSISTENCY: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Io => EXIT_IO,
                ErrorKind::Format => EXIT_FORMAT,
                ErrorKind::Consistency => EXIT_CONSISTENCY,
            },
            CliError::Config(_) | CliError::Usage(_) => EXIT_DATA,
        }
    }
}
