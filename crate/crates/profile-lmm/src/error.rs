//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model specification (bad column index, C < 2, ...).
    #[error("invalid model specification: {0}")]
    Spec(String),

    /// Invalid distribution or function parameter.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A matrix that must be positive definite failed its Cholesky
    /// factorization. `site` names the update that produced it.
    #[error("matrix not positive definite in {site}")]
    NotPositiveDefinite { site: String },

    /// Numerical failure during sampling (degenerate weights, overflow, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Invalid or inconsistent input data.
    #[error("invalid data: {0}")]
    Data(String),

    /// Malformed persisted artifact.
    #[error("storage format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
