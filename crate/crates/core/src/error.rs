use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("manifold index {n} outside 0..={max}")]
    OutOfRange { n: usize, max: usize },

    #[error("steady state is not unique: {0}")]
    NonUniqueSteadyState(String),

    #[error("integrator failed at t = {time:e} s: {reason}")]
    Integrator { time: f64, reason: String },

    #[error("target photon number {target} unreachable: {reason}")]
    Unreachable { target: f64, reason: String },

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("fit did not converge after {iterations} iterations")]
    FitDiverged { iterations: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed click stream: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
