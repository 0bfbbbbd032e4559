//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by matrix kernels, solvers, and input handling.
#[derive(Debug, Error)]
pub enum Error {
    /// Cholesky factorization failed: the matrix is not positive definite.
    /// `minor` is the 1-based order of the first non-positive leading minor.
    #[error("matrix is not positive definite (leading minor {minor} of {dim})")]
    NotPositiveDefinite { minor: usize, dim: usize },

    #[error("dimension mismatch: {left}x{left} vs {right}x{right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("sample covariance is singular ({n_samples} samples, dimension {dim})")]
    SingularCovariance { dim: usize, n_samples: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteData { row: usize, col: usize },

    /// The covariance is (numerically) diagonal, so no admissible divergence
    /// tolerance exists: the problem is trivial for every delta > 0.
    #[error("covariance is diagonal (delta_max = {delta_max:.3e}); no admissible tolerance exists")]
    DiagonalCovariance { delta_max: f64 },

    /// The requested tolerance is at or beyond the largest meaningful one.
    #[error("tolerance delta = {delta} must lie in (0, delta_max = {delta_max})")]
    InfeasibleTolerance { delta: f64, delta_max: f64 },

    /// A dual iterate or candidate point violates the feasibility conditions.
    #[error("infeasible dual point: {reason}")]
    InfeasiblePoint { reason: String },

    /// Too many bootstrap replicates were discarded as singular.
    #[error("calibration discarded {discarded} of {replicates} replicates (limit 1%)")]
    ExcessiveDiscards { discarded: usize, replicates: usize },

    /// Ground-truth generation could not reach a valid instance.
    #[error("synthetic instance construction failed after {attempts} attempts")]
    ConstructionFailed { attempts: usize },

    /// Dense Hessian assembly is capped to keep memory bounded.
    #[error("hessian assembly limited to dimension {max}, got {dim}")]
    HessianTooLarge { dim: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
