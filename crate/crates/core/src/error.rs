use std::io;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset has zero rows")]
    EmptyDataset,

    /// The normal matrix (or an aggregate of shard normal matrices) is singular.
    #[error("rank deficiency: pivot {index} is {pivot:e}")]
    RankDeficient { index: usize, pivot: f64 },

    /// Cholesky factorization failed; carries the smallest pivot encountered.
    #[error("matrix is not positive definite: smallest pivot {pivot:e} at index {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    /// An iterate became non-finite.
    #[error("numerical divergence: {0}")]
    Diverged(String),

    #[error("inconsistent committee precision: {0:e}")]
    InconsistentPrecision(f64),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("server error {code}: {message}")]
    Remote { code: u16, message: String },

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// An io error that names the file it concerns.
    pub(crate) fn io_at(path: &std::path::Path, err: io::Error) -> Self {
        Error::Io(io::Error::new(err.kind(), format!("{}: {err}", path.display())))
    }

    pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, actual })
        }
    }
}
