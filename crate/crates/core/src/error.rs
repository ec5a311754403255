use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layer: {0}")]
    InvalidLayer(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed block-sparse encoding: {0}")]
    MalformedEncoding(String),

    #[error("bad tensor file: {0}")]
    Format(String),

    #[error("layers {from} -> {to} do not chain: {detail}")]
    ChainMismatch { from: usize, to: usize, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "verification failed at layer {layer} ({name}): first mismatch at index {index}, \
         expected {expected}, simulated {actual} ({mismatches} mismatching values)"
    )]
    Verification {
        layer: usize,
        name: String,
        index: usize,
        expected: i64,
        actual: i64,
        mismatches: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    ConfigParse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
