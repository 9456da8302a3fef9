//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input matrix is not square or not symmetric within tolerance.
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    /// A covariance has an eigenvalue below the PSD tolerance.
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    /// Cholesky factorization failed: the matrix is singular or indefinite.
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("variable index {index} out of range for arity {arity}")]
    IndexOutOfRange { index: usize, arity: usize },

    /// Single-variable powers above this limit overflow the double-factorial
    /// moment rule in f64.
    #[error("variable power {power} exceeds the supported maximum {max}")]
    DegreeTooHigh { power: u32, max: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A filtering or smoothing recursion lost positive definiteness.
    #[error("numerical failure at step {step}: {reason}")]
    NumericalFailure { step: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
