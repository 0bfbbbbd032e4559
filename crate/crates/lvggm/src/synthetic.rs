//! Ground-truth generators and recovery metrics for benchmarking.
//!
//! Builds planted sparse-plus-low-rank concentration matrices, draws Gaussian
//! samples from the implied covariance, and scores an estimated
//! decomposition against the plant. Everything is a pure function of the
//! seed so experiments replay exactly.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibration::sample_gaussian_rows;
use crate::error::{Error, Result};
use crate::recovery::Decomposition;
use crate::sym::SymMatrix;

const MIN_EIG_TARGET: f64 = 0.3;
const MAX_EIG_L: f64 = 0.7;
/// Planted nonzero eigenvalues of L0 must stay above this fraction of the
/// top one. A plant whose smallest latent direction is nearly zero makes
/// rank recovery meaningless, the way near-zero support entries would make
/// support F1 meaningless.
const MIN_EIG_RATIO_L: f64 = 0.5;
const MAX_ATTEMPTS: usize = 512;

/// A planted model: sparse `S0`, rank-`rank0` `L0`, and the covariance
/// `sigma_m = (S0 - L0)^-1` that data is drawn from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub m: usize,
    pub rank0: usize,
    pub density: f64,
    pub seed: u64,
    /// Planted off-diagonal support, row < col.
    pub support0: Vec<(usize, usize)>,
    #[serde(rename = "S0")]
    pub s0: SymMatrix,
    #[serde(rename = "L0")]
    pub l0: SymMatrix,
    pub sigma_m: SymMatrix,
}

/// Support F1 and rank/Frobenius errors of an estimate against the plant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub support_f1: f64,
    pub false_pos: usize,
    pub false_neg: usize,
    pub rank_err: usize,
    #[serde(rename = "frob_err_X")]
    pub frob_err_x: f64,
}

fn draw_instance(
    m: usize,
    rank: usize,
    density: f64,
    rng: &mut ChaCha12Rng,
) -> (Vec<(usize, usize)>, SymMatrix, SymMatrix) {
    let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            pairs.push((i, j));
        }
    }
    let n_entries = (density * pairs.len() as f64).ceil() as usize;
    let picked = rand::seq::index::sample(rng, pairs.len(), n_entries);
    let mut support: Vec<(usize, usize)> = picked.iter().map(|k| pairs[k]).collect();
    support.sort_unstable();

    let mut pattern = SymMatrix::zeros(m);
    for &(i, j) in &support {
        let mag = rng.random_range(0.2..0.5);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        pattern.set(i, j, sign * mag);
    }

    let l0 = if rank == 0 {
        SymMatrix::zeros(m)
    } else {
        let f = DMatrix::<f64>::from_fn(m, rank, |_, _| rng.sample(StandardNormal));
        let raw = SymMatrix::from_dense_mirror(&f * f.transpose());
        let top = raw.eig().max();
        raw.scaled(MAX_EIG_L / top)
    };
    (support, pattern, l0)
}

/// Generate a planted instance. `S0` is `a I` plus a random sparse
/// off-diagonal pattern with `ceil(density * m(m-1)/2)` entries of magnitude
/// in `[0.2, 0.5)`; `L0 = F F^T` is scaled to top eigenvalue 1; the diagonal
/// level `a` is then raised until `min_eig(S0 - L0) >= 0.1`.
pub fn gen_ground_truth(m: usize, rank: usize, density: f64, seed: u64) -> Result<GroundTruth> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("m must be >= 2, got {m}")));
    }
    if rank >= m {
        return Err(Error::InvalidArgument(format!(
            "rank must be < m, got rank {rank} with m {m}"
        )));
    }
    if !(density > 0.0 && density < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "density must lie in (0, 1), got {density}"
        )));
    }

    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let (support0, pattern, l0) = draw_instance(m, rank, density, &mut rng);

        // Diagonal level pinning min_eig(S0 - L0) at the target exactly:
        // eigenvalues of aI + pattern - L0 shift linearly in a, so the
        // scale-up has a closed form and instances share a common scale.
        let a = MIN_EIG_TARGET - (&pattern - &l0).eig().min();
        let mut s0 = pattern;
        for i in 0..m {
            s0.set(i, i, a);
        }

        let l_eigs = l0.eig();
        let cutoff = 1e-10 * l_eigs.max().max(1.0);
        let observed_rank = l_eigs.values.iter().filter(|&&w| w > cutoff).count();
        if observed_rank != rank {
            continue;
        }
        if rank > 0 {
            let n = l_eigs.values.len();
            let smallest_kept = l_eigs.values[n - rank];
            if smallest_kept < MIN_EIG_RATIO_L * l_eigs.max() {
                continue;
            }
        }

        let sigma_m = (&s0 - &l0).inverse_spd()?;
        return Ok(GroundTruth {
            m,
            rank0: rank,
            density,
            seed,
            support0,
            s0,
            l0,
            sigma_m,
        });
    }
    Err(Error::ConstructionFailed {
        attempts: MAX_ATTEMPTS,
    })
}

/// Draw `n` i.i.d. zero-mean Gaussian rows with covariance `gt.sigma_m`.
pub fn sample_data(gt: &GroundTruth, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_gaussian_rows(&gt.sigma_m, n, &mut rng)
}

/// Score an estimated decomposition against the plant.
pub fn recovery_metrics(est: &Decomposition, gt: &GroundTruth) -> Result<RecoveryMetrics> {
    if est.m != gt.m {
        return Err(Error::DimensionMismatch {
            left: est.m,
            right: gt.m,
        });
    }
    let truth: std::collections::BTreeSet<(usize, usize)> =
        gt.support0.iter().copied().collect();
    let estimated: std::collections::BTreeSet<(usize, usize)> =
        est.support.iter().copied().collect();
    let tp = estimated.intersection(&truth).count();
    let false_pos = estimated.len() - tp;
    let false_neg = truth.len() - tp;
    let support_f1 = if 2 * tp + false_pos + false_neg == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + false_pos + false_neg) as f64
    };
    let x0 = &gt.s0 - &gt.l0;
    let frob_err_x = (&est.x - &x0).frobenius_norm() / x0.frobenius_norm();
    Ok(RecoveryMetrics {
        support_f1,
        false_pos,
        false_neg,
        rank_err: est.rank_l.abs_diff(gt.rank0),
        frob_err_x,
    })
}
