use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MatError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MatError {
    /// Shapes that do not fit together.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: String, detail: String },

    /// Invalid hyperparameters or run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl MatError {
    pub(crate) fn dim(op: impl Into<String>, detail: impl Into<String>) -> Self {
        MatError::Dimension {
            op: op.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MatError::Io {
            path: path.into(),
            source,
        }
    }
}
