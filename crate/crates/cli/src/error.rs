use std::path::PathBuf;

use blanc_core::BlancError;
use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, missing inputs or invalid configuration.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] BlancError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    /// The command ran but its check did not pass.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for usage and configuration problems, 1 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                BlancError::Config(_)
                | BlancError::InvalidSpec(_)
                | BlancError::Parse { .. }
                | BlancError::Empty(_)
                | BlancError::Alignment(_)
                | BlancError::Length { .. }
                | BlancError::Checkpoint(_) => 2,
                _ => 1,
            },
            CliError::Io { .. } | CliError::Csv(_) | CliError::Failed(_) => 1,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(BlancError::Json(e))
    }
}
