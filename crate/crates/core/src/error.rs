use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Cholesky failed even at the largest allowed jitter.
    #[error("matrix not positive definite (n = {size}, jitter = {jitter:e})")]
    NotPositiveDefinite { size: usize, jitter: f64 },

    /// The surrogate was mutated after the last fit, or never fitted.
    #[error("surrogate state is stale: call refit() before predicting")]
    Stale,

    #[error("objective evaluation failed: {0}")]
    Objective(String),

    #[error("{0}")]
    Construction(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
