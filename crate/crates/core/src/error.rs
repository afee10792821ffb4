use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input: bad parameter values, broken profile assumptions.
    #[error("validation error: {0}")]
    Validation(String),

    /// Dimension mismatch between a profile and a solved equivalent.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Fixed-point iteration did not reach the requested tolerance.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { residual: f64, iterations: usize },

    /// A linear system or factorization failed; for valid profiles this
    /// signals a spectral radius >= 1.
    #[error("singular system: {0}")]
    Singular(String),

    /// Theta^2 <= 0 at the kappa = -1 boundary.
    #[error("degenerate variance: theta_sq = {theta_sq:.3e} <= 0")]
    DegenerateVariance { theta_sq: f64 },

    /// The Fredholm series cost cap was exceeded.
    #[error("cost cap exceeded: {0}")]
    CostCap(String),

    /// Parse failure when loading tabular data.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
