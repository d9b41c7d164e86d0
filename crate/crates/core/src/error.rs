use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension mismatch, index out of range, malformed game structure.
    #[error("structural error: {0}")]
    Structural(String),
    /// Non-finite input to a numeric routine.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A caller-side precondition was violated (e.g. a negative price).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("instance generation failed: {0}")]
    Generation(String),
    /// A runtime certificate that must hold on every trajectory did not.
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}
