use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    ParseLine { line: usize, message: String },

    #[error("dataset contains no interactions")]
    EmptyDataset,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The symmetric factorization hit a non-positive pivot; the matrix is
    /// not numerically positive definite.
    #[error("factorization failed: pivot {pivot} is not positive")]
    NotPositiveDefinite { pivot: usize },

    #[error("symmetric eigendecomposition did not converge")]
    EigenNonConvergence,

    #[error("bad matrix container {path}: {message}")]
    BadContainer { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
