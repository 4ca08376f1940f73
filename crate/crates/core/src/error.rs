//! Error types shared across the library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    /// A constructor or sampler received an out-of-range argument.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A cumulant generating function was evaluated outside its domain.
    #[error("theta={theta} outside CGF domain ({lo}, {hi}) at state {state}")]
    CgfDomain {
        theta: f64,
        lo: f64,
        hi: f64,
        state: String,
    },

    /// Power iteration did not reach the convergence tolerance.
    #[error("eigensolve did not converge after {iters} iterations (last residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    /// The transition structure is not irreducible.
    #[error("matrix is reducible; the Perron-Frobenius eigenpair is not well defined")]
    Reducible,

    /// No positive root of psi exists inside the CGF domain.
    #[error("Cramer condition not satisfied: {0}")]
    CramerCondition(String),

    /// A documented precondition of an operation was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The drift-budget inequality failed at the requested delta, so the
    /// state-dependent sampler's efficiency guarantee is unavailable.
    #[error(
        "delta={delta} too large for guaranteed efficiency; use SI or crude \
         (largest admissible delta ~ {max_admissible:e})"
    )]
    LyapunovRefused { delta: f64, max_admissible: f64 },

    /// A model failed validation; the messages list each violation.
    #[error("model validation failed: {0:?}")]
    InvalidModel(Vec<String>),
}

pub type Result<T> = std::result::Result<T, CoreError>;
