//! Error type shared by every solver module.
//!
//! The CLI maps variants to distinct exit codes, so keep the split between
//! validation, divergence, non-convergence and truncation failures intact.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Rejected input: a precondition on the data failed (bad grid, barrier
    /// gap, anchor outside the barriers, NaN field, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Configuration-time failure, e.g. the loss/barrier range condition
    /// cannot be satisfied on the given band so no bracket exists.
    #[error("configuration error: {0}")]
    Config(String),

    /// The effective operator band collapsed (upper inverse barrier not
    /// strictly above the lower one).
    #[error("degenerate operator band: {0}")]
    DegenerateBand(String),

    /// A marching solve blew past its value ceiling.
    #[error("divergence in {context}: {detail}")]
    Divergence { context: String, detail: String },

    /// An iterative procedure exhausted its budget.
    #[error("no convergence after {iters} iterations (last residual {residual:.3e})")]
    NonConvergence {
        iters: usize,
        residual: f64,
        history: Vec<f64>,
    },

    /// A truncation schedule did not stabilize; the data is reported rather
    /// than silently accepted.
    #[error("inconclusive truncation schedule: {0}")]
    InconclusiveTruncation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Config(_) | Error::DegenerateBand(_) => 2,
            Error::Divergence { .. } => 3,
            Error::NonConvergence { .. } => 4,
            Error::InconclusiveTruncation(_) => 5,
            Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
