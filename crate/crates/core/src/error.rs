use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("fractal bank at {path} has no decodable images")]
    EmptyBank { path: PathBuf },

    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("incomplete corruption grid: {0}")]
    IncompleteGrid(String),

    #[error("prediction log line {line}: {message}")]
    Log { line: usize, message: String },

    #[error("invalid prediction record: {0}")]
    Record(String),

    #[error("invalid sequence: {0}")]
    Sequence(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
