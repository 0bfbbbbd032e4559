//! Sample covariances and Monte Carlo sizing of the divergence budget.
//!
//! The budget `delta_alpha` answers: how far does a sample covariance of N
//! zero-mean Gaussian rows typically stray from the truth? A parametric
//! bootstrap treats the observed covariance as truth, redraws N-row samples
//! from it, and takes the `alpha` quantile of the divergences of the
//! resampled covariances back to the original.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergence::{delta_max, kl2, CovarianceEstimate};
use crate::error::{Error, Result};
use crate::sym::SymMatrix;
use nalgebra::DMatrix;

/// Fixed quantiles of the bootstrap divergence sample, reported alongside
/// the requested one so callers can trade coverage for budget.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuantileSummary {
    #[serde(rename = "0.5")]
    pub q50: f64,
    #[serde(rename = "0.9")]
    pub q90: f64,
    #[serde(rename = "0.95")]
    pub q95: f64,
    #[serde(rename = "0.99")]
    pub q99: f64,
}

/// Outcome of [`calibrate_delta`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub alpha: f64,
    pub delta_alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub delta_max: f64,
    /// True when `delta_alpha >= delta_max`: the budget would admit a
    /// latent-free diagonal model and cannot parameterize a decomposition.
    pub exceeded_delta_max: bool,
    pub quantiles: QuantileSummary,
    /// Ascending divergence sample behind the quantiles. Not serialized.
    #[serde(skip)]
    pub sample: Vec<f64>,
}

/// Zero-mean sample covariance `N^-1 sum_k x_k x_k^T` (no mean subtraction).
pub fn sample_covariance(data: &DMatrix<f64>) -> Result<CovarianceEstimate> {
    let n = data.nrows();
    let m = data.ncols();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 data rows, got {n}"
        )));
    }
    for i in 0..n {
        for j in 0..m {
            if !data[(i, j)].is_finite() {
                return Err(Error::NonFiniteData { row: i, col: j });
            }
        }
    }
    let mut acc = DMatrix::zeros(m, m);
    for k in 0..n {
        let row = data.row(k);
        for j in 0..m {
            for i in j..m {
                acc[(i, j)] += row[i] * row[j];
            }
        }
    }
    acc /= n as f64;
    let sigma_hat = SymMatrix::from_dense_mirror(acc);
    CovarianceEstimate::new(sigma_hat, n).map_err(|e| match e {
        Error::NotPositiveDefinite { dim, .. } => Error::SingularCovariance { dim, n_samples: n },
        other => other,
    })
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Independent generator for replicate `k`, attempt `attempt`: the key is
/// expanded from (seed, k, attempt) so any replicate can be redrawn without
/// touching the others and worker order can never matter.
fn replicate_rng(seed: u64, k: u64, attempt: u64) -> ChaCha12Rng {
    let mut s = seed;
    let _ = splitmix64(&mut s);
    s ^= k.wrapping_mul(0xA24BAED4963EE407);
    let _ = splitmix64(&mut s);
    s ^= attempt.wrapping_mul(0x9FB21C651E98DF25);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Sample covariance of `n` fresh draws from the zero-mean Gaussian with
/// Cholesky factor `chol_l`.
fn bootstrap_covariance(chol_l: &DMatrix<f64>, n: usize, rng: &mut impl Rng) -> SymMatrix {
    let m = chol_l.nrows();
    let mut acc = DMatrix::zeros(m, m);
    let mut z = vec![0.0f64; m];
    let mut x = vec![0.0f64; m];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        // x = L z with L lower triangular
        for i in 0..m {
            let mut v = 0.0;
            for j in 0..=i {
                v += chol_l[(i, j)] * z[j];
            }
            x[i] = v;
        }
        for j in 0..m {
            for i in j..m {
                acc[(i, j)] += x[i] * x[j];
            }
        }
    }
    acc /= n as f64;
    SymMatrix::from_dense_mirror(acc)
}

fn nearest_rank(sorted: &[f64], alpha: f64) -> f64 {
    let m = sorted.len();
    let idx = ((alpha * m as f64).ceil() as usize).clamp(1, m);
    sorted[idx - 1]
}

/// Monte Carlo estimate of the divergence budget `delta_alpha`.
///
/// Draws `replicates` sample covariances of `ce.n_samples()` rows each from
/// the Gaussian with covariance `ce.sigma_hat()`, records the divergence of
/// each back to `ce.sigma_hat()`, and returns the nearest-rank `alpha`
/// quantile. Deterministic in (seed, replicates, alpha). Replicates whose
/// covariance is singular are redrawn; more than 1% of them is an error.
pub fn calibrate_delta(
    ce: &CovarianceEstimate,
    alpha: f64,
    replicates: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if replicates < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 replicates, got {replicates}"
        )));
    }
    let chol_l = ce.sigma_hat().cholesky()?.lower().clone();
    let n = ce.n_samples();
    let mut sample = Vec::with_capacity(replicates);
    let mut discarded = 0usize;
    for k in 0..replicates {
        let mut attempt = 0u64;
        let d = loop {
            let mut rng = replicate_rng(seed, k as u64, attempt);
            let rep = bootstrap_covariance(&chol_l, n, &mut rng);
            match kl2(&rep, ce.sigma_hat()) {
                Ok(d) => break d,
                Err(_) => {
                    discarded += 1;
                    if discarded * 100 > replicates {
                        return Err(Error::ExcessiveDiscards {
                            discarded,
                            replicates,
                        });
                    }
                    attempt += 1;
                }
            }
        };
        sample.push(d);
    }
    sample.sort_by(f64::total_cmp);
    let dmax = delta_max(ce.sigma_hat())?;
    let delta_alpha = nearest_rank(&sample, alpha);
    Ok(CalibrationReport {
        alpha,
        delta_alpha,
        replicates,
        seed,
        delta_max: dmax,
        exceeded_delta_max: delta_alpha >= dmax,
        quantiles: QuantileSummary {
            q50: nearest_rank(&sample, 0.5),
            q90: nearest_rank(&sample, 0.9),
            q95: nearest_rank(&sample, 0.95),
            q99: nearest_rank(&sample, 0.99),
        },
        sample,
    })
}

/// Draw an N×m zero-mean Gaussian data table with covariance `sigma`.
/// Used by synthetic benchmarks and the command-line generator.
pub fn sample_gaussian_rows(
    sigma: &SymMatrix,
    n: usize,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    let chol_l = sigma.cholesky()?.lower().clone();
    let m = sigma.dim();
    let mut data = DMatrix::zeros(n, m);
    let mut z = vec![0.0f64; m];
    for k in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..m {
            let mut v = 0.0;
            for j in 0..=i {
                v += chol_l[(i, j)] * z[j];
            }
            data[(k, i)] = v;
        }
    }
    Ok(data)
}
