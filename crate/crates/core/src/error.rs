use thiserror::Error;

pub type Result<T, E = BlancError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BlancError {
    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    Dimension {
        op: &'static str,
        expected: String,
        actual: String,
    },
    #[error("invalid mask: no position is selected")]
    InvalidMask,
    #[error("index out of bounds: {0}")]
    Bounds(String),
    #[error("non-finite gradient in parameter `{param}`")]
    Numeric { param: String },
    #[error("construction invalid: {0}")]
    ConstructionInvalid(String),
    #[error("invalid multi-span spec: {0}")]
    InvalidSpec(String),
    #[error("sequence length {len} exceeds maximum {max}")]
    Length { len: usize, max: usize },
    #[error("span alignment failed: {0}")]
    Alignment(String),
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BlancError {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        BlancError::Dimension {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
