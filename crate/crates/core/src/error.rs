use thiserror::Error;

/// Errors surfaced by constructors, solvers, samplers, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {name}={value} out of range (must be < {bound})")]
    IndexOutOfRange {
        name: &'static str,
        value: usize,
        bound: usize,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A sampling or step-size assumption required by the analysis fails.
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("load error ({field}): {reason}")]
    Load { field: String, reason: String },

    #[error("game validation failed: {0}")]
    InvalidGame(String),

    #[error("value iteration did not converge within {cap} iterations")]
    NonConvergence { cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
