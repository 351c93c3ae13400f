use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("index {index} out of range (valid: {valid})")]
    Index { index: usize, valid: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error(
        "covariance system of size {size} is not positive definite after jitter {jitter:e} \
         (smallest diagonal entry {min_diag:e})"
    )]
    NotPositiveDefinite {
        size: usize,
        jitter: f64,
        min_diag: f64,
    },

    #[error("negative predictive variance {0:e} after jitter")]
    NegativeVariance(f64),

    #[error("run log parse error at line {line}: {message}")]
    Log { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
