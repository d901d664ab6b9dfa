use thiserror::Error;

/// Errors produced by model construction, solvers and the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("noise covariance is not Hermitian within tolerance")]
    NotHermitian,

    #[error("noise covariance is not positive semidefinite")]
    NotPsd,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical breakdown at iteration {iteration}: {detail}")]
    NumericalBreakdown { iteration: usize, detail: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
