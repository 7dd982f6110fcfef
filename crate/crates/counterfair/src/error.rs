//! Crate-wide error type.
//!
//! Errors are split by what the caller can do about them: `Validation` means
//! the inputs violate a documented precondition (fix the call), `Numerics`
//! means the data admits no well-defined answer (degenerate probabilities,
//! missing overlap), and `Search` means a stochastic search exhausted its
//! budget without producing a usable result.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A computation is undefined on the given data (degenerate probability,
    /// overlap violation, non-finite intermediate).
    #[error("numerical error: {0}")]
    Numerics(String),

    /// A randomized search finished its budget without an acceptable result.
    #[error("search error: {0}")]
    Search(String),

    /// Filesystem failure while reading or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV input.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed JSON artifact.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Build a `Validation` error from anything displayable.
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Build a `Numerics` error from anything displayable.
    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }

    /// Build a `Search` error from anything displayable.
    pub fn search(msg: impl Into<String>) -> Self {
        Error::Search(msg.into())
    }
}
