use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the retrieval engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("invalid value in record {index} ({id:?}): {detail}")]
    InvalidRecord {
        index: usize,
        id: String,
        detail: String,
    },

    #[error("manifest line {line}: {detail}")]
    Manifest { line: usize, detail: String },

    #[error("manifest validation: {0}")]
    ManifestValidation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rank deficient data: effective rank {rank} below requested {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("image decode error: {0}")]
    Image(String),

    #[error("id mismatch: {0}")]
    IdMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
