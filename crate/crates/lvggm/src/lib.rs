//! Robust sparse-plus-low-rank decomposition of Gaussian concentration
//! matrices.
//!
//! Given a sample covariance that is only trusted up to a divergence budget,
//! this crate recovers a precision matrix split `S - L` where `S` carries a
//! sparse conditional-dependence graph and `L` is a low-rank correction
//! attributable to a few latent variables. The main entry points:
//!
//! - [`calibration::calibrate_delta`] sizes the divergence budget from data,
//! - [`dual::solve_dual`] runs the projected-gradient dual solver,
//! - [`recovery::recover`] turns a dual optimum into an explicit `(S, L)`
//!   decomposition with diagnostics,
//! - [`classic::solve_classic`] is the non-robust ADMM reference method,
//! - [`synthetic`] generates ground-truth models for benchmarking.

pub mod calibration;
pub mod classic;
pub mod divergence;
pub mod dual;
pub mod error;
pub mod io;
pub mod recovery;
pub mod sym;
pub mod synthetic;

#[cfg(test)]
pub(crate) mod testutil;

pub use calibration::{calibrate_delta, sample_covariance, CalibrationReport};
pub use classic::{classic_objective, solve_classic, AdmmTrace, ClassicSpec};
pub use divergence::{delta_max, kl2, kl2_of_x, CovarianceEstimate, ProblemSpec};
pub use dual::{solve_dual, DualPoint, SolverConfig, SolverTrace};
pub use recovery::{recover, Decomposition, KktReport, RecoveryConfig, RANK_REL_TOL_DEFAULT};
pub use error::{Error, Result};
pub use sym::{CholFactor, SymEigen, SymMatrix};
pub use synthetic::{gen_ground_truth, recovery_metrics, sample_data, GroundTruth, RecoveryMetrics};
