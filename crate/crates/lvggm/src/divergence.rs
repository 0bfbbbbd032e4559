//! Divergence between zero-mean Gaussians and the feasibility bound on the
//! uncertainty budget.
//!
//! Every divergence here is the doubled Kullback-Leibler value `2 D_KL`,
//! because the uncertainty constraint is stated as `2 D_KL <= delta`
//! throughout. Keeping the factor inside the functions removes a whole class
//! of factor-of-two mistakes in callers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sym::SymMatrix;

/// Sample covariance together with the number of rows it was computed from.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    sigma_hat: SymMatrix,
    n_samples: usize,
    logdet: f64,
}

impl CovarianceEstimate {
    /// Validates positive definiteness and `n_samples >= 2`.
    pub fn new(sigma_hat: SymMatrix, n_samples: usize) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 samples, got {n_samples}"
            )));
        }
        let logdet = sigma_hat.cholesky_logdet()?;
        Ok(Self {
            sigma_hat,
            n_samples,
            logdet,
        })
    }

    pub fn sigma_hat(&self) -> &SymMatrix {
        &self.sigma_hat
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.sigma_hat.dim()
    }

    /// `log|sigma_hat|`, cached at construction.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }
}

/// Weights of the decomposition problem: sparsity/rank trade-off `gamma`
/// and divergence budget `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub gamma: f64,
    pub delta: f64,
}

impl ProblemSpec {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "delta must be positive and finite, got {delta}"
            )));
        }
        Ok(Self { gamma, delta })
    }

    /// Checks `delta < delta_max(sigma_hat)`. A (numerically) diagonal
    /// covariance admits no positive budget at all and is rejected outright.
    pub fn validate_against(&self, ce: &CovarianceEstimate) -> Result<()> {
        let dmax = delta_max(ce.sigma_hat())?;
        if dmax <= 1e-12 {
            return Err(Error::DiagonalCovariance { delta_max: dmax });
        }
        if self.delta >= dmax {
            return Err(Error::InfeasibleTolerance {
                delta: self.delta,
                delta_max: dmax,
            });
        }
        Ok(())
    }
}

/// Doubled divergence `2 D_KL(sigma_hat || sigma)`
/// `= log|sigma| - log|sigma_hat| + tr(sigma^-1 sigma_hat) - m`.
///
/// Nonnegative, zero iff the arguments are equal.
pub fn kl2(sigma_hat: &SymMatrix, sigma: &SymMatrix) -> Result<f64> {
    if sigma_hat.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            left: sigma_hat.dim(),
            right: sigma.dim(),
        });
    }
    let m = sigma_hat.dim() as f64;
    let chol = sigma.cholesky()?;
    let logdet_hat = sigma_hat.cholesky_logdet()?;
    Ok(chol.logdet() - logdet_hat + chol.trace_solve(sigma_hat) - m)
}

/// Same divergence expressed through the concentration matrix `X = sigma^-1`:
/// `-log|X| - log|sigma_hat| + tr(X sigma_hat) - m`, evaluated without
/// inverting `X`.
pub fn kl2_of_x(sigma_hat: &SymMatrix, x: &SymMatrix) -> Result<f64> {
    if sigma_hat.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            left: sigma_hat.dim(),
            right: x.dim(),
        });
    }
    let m = sigma_hat.dim() as f64;
    let logdet_x = x.cholesky_logdet()?;
    let logdet_hat = sigma_hat.cholesky_logdet()?;
    Ok(-logdet_x - logdet_hat + x.inner(sigma_hat) - m)
}

/// Largest admissible divergence budget:
/// `delta_max = log|dd(sigma_hat)| - log|sigma_hat|`.
///
/// Equals the divergence from `sigma_hat` to the nearest positive diagonal
/// matrix (whose minimizer is `dd(sigma_hat)` itself), so any `delta` at or
/// above this value lets the uncertainty ball contain a latent-free model.
pub fn delta_max(sigma_hat: &SymMatrix) -> Result<f64> {
    let logdet_hat = sigma_hat.cholesky_logdet()?;
    let logdet_diag: f64 = (0..sigma_hat.dim())
        .map(|i| sigma_hat.entry(i, i).ln())
        .sum();
    Ok(logdet_diag - logdet_hat)
}

const LN_2PI: f64 = 1.8378770664093453;

/// Negative log-likelihood of zero-mean Gaussian data with sample covariance
/// `sigma_hat` over `n_samples` rows, under model covariance `sigma`:
/// `(N/2) [log|sigma| + tr(sigma_hat sigma^-1) + m log 2 pi]`.
pub fn nll(sigma_hat: &SymMatrix, n_samples: usize, sigma: &SymMatrix) -> Result<f64> {
    if sigma_hat.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            left: sigma_hat.dim(),
            right: sigma.dim(),
        });
    }
    let m = sigma_hat.dim() as f64;
    let chol = sigma.cholesky()?;
    let n = n_samples as f64;
    Ok(0.5 * n * (chol.logdet() + chol.trace_solve(sigma_hat) + m * LN_2PI))
}

/// Likelihood level set matching the divergence budget: a model satisfies
/// `kl2(sigma_hat, sigma) <= delta` iff `nll(sigma) <= delta_to_nll_bound`.
pub fn delta_to_nll_bound(ce: &CovarianceEstimate, delta: f64) -> f64 {
    let m = ce.dim() as f64;
    0.5 * ce.n_samples() as f64 * (delta + ce.logdet() + m + m * LN_2PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_spd, sym};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Golden-section minimum of a unimodal scalar function on [a, b].
    fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        while (b - a) > 1e-12 * b.abs().max(1.0) {
            if f(c) < f(d) {
                b = d;
                d = c;
                c = b - inv_phi * (b - a);
            } else {
                a = c;
                c = d;
                d = a + inv_phi * (b - a);
            }
        }
        f(0.5 * (a + b))
    }

    /// Brute-force `min over positive diagonal D of kl2(sigma_hat, D)`.
    /// The objective is separable across diagonal entries, so each coordinate
    /// is minimized independently by scalar search; no closed form is used.
    fn delta_max_oracle(sigma_hat: &SymMatrix) -> f64 {
        let m = sigma_hat.dim();
        let logdet_hat = sigma_hat.cholesky_logdet().unwrap();
        let mut total = -logdet_hat - m as f64;
        for i in 0..m {
            let s = sigma_hat.entry(i, i);
            total += golden_min(s / 100.0, s * 100.0, |d| d.ln() + s / d);
        }
        total
    }

    #[test]
    fn kl2_identical_is_zero() {
        let i2 = SymMatrix::identity(2);
        assert_eq!(kl2(&i2, &i2).unwrap(), 0.0);
    }

    #[test]
    fn kl2_diag_example() {
        let a = SymMatrix::from_diagonal(&[2.0, 1.0]);
        let v = kl2(&a, &SymMatrix::identity(2)).unwrap();
        assert_relative_eq!(v, 1.0 - 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn kl2_scalar_example() {
        let v = kl2(
            &SymMatrix::from_diagonal(&[4.0]),
            &SymMatrix::from_diagonal(&[1.0]),
        )
        .unwrap();
        assert_relative_eq!(v, 3.0 - 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn kl2_dimension_mismatch() {
        let e = kl2(&SymMatrix::identity(2), &SymMatrix::identity(3));
        assert!(matches!(e, Err(Error::DimensionMismatch { left: 2, right: 3 })));
    }

    #[test]
    fn kl2_nonnegative_random() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..10 {
            let a = random_spd(4, &mut rng);
            let b = random_spd(4, &mut rng);
            assert!(kl2(&a, &b).unwrap() >= 0.0);
            assert!(kl2(&a, &a).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn kl2_of_x_trivial_inverse() {
        let mut rng = StdRng::seed_from_u64(1);
        let a = random_spd(3, &mut rng);
        let v = kl2_of_x(&a, &a.inverse_spd().unwrap()).unwrap();
        assert!(v.abs() <= 1e-10);
    }

    #[test]
    fn kl2_of_x_diag_example() {
        let v = kl2_of_x(&SymMatrix::identity(2), &SymMatrix::from_diagonal(&[2.0, 1.0])).unwrap();
        assert_relative_eq!(v, 1.0 - 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn kl2_of_x_matches_kl2_via_inversion() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..10 {
            let sigma_hat = random_spd(5, &mut rng);
            let x = random_spd(5, &mut rng);
            let direct = kl2_of_x(&sigma_hat, &x).unwrap();
            let via_inv = kl2(&sigma_hat, &x.inverse_spd().unwrap()).unwrap();
            assert_relative_eq!(direct, via_inv, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn delta_max_diagonal_is_zero() {
        let d = SymMatrix::from_diagonal(&[3.0, 0.5, 7.0]);
        assert!(delta_max(&d).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn delta_max_correlated_pair() {
        let a = sym(&[&[1.0], &[0.5, 1.0]]);
        assert_relative_eq!(delta_max(&a).unwrap(), (4.0f64 / 3.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn delta_max_matches_bruteforce_oracle() {
        let mut rng = StdRng::seed_from_u64(77);
        for _ in 0..5 {
            let a = random_spd(4, &mut rng);
            let closed = delta_max(&a).unwrap();
            let brute = delta_max_oracle(&a);
            assert_relative_eq!(closed, brute, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn delta_max_equals_kl2_to_own_diagonal() {
        let mut rng = StdRng::seed_from_u64(13);
        let a = random_spd(5, &mut rng);
        let dd: Vec<f64> = (0..5).map(|i| a.entry(i, i)).collect();
        let v = kl2(&a, &SymMatrix::from_diagonal(&dd)).unwrap();
        assert_relative_eq!(delta_max(&a).unwrap(), v, epsilon = 1e-12);
    }

    #[test]
    fn delta_max_lower_bounds_diagonal_divergences() {
        let mut rng = StdRng::seed_from_u64(99);
        let a = random_spd(4, &mut rng);
        let dmax = delta_max(&a).unwrap();
        for _ in 0..100 {
            let d: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..5.0)).collect();
            let v = kl2(&a, &SymMatrix::from_diagonal(&d)).unwrap();
            assert!(v >= dmax - 1e-12);
        }
    }

    #[test]
    fn nll_scalar_example() {
        let one = SymMatrix::from_diagonal(&[1.0]);
        let v = nll(&one, 2, &one).unwrap();
        assert_relative_eq!(v, 1.0 + LN_2PI, epsilon = 1e-12);
    }

    #[test]
    fn nll_difference_is_scaled_kl2() {
        let mut rng = StdRng::seed_from_u64(8);
        let sigma_hat = random_spd(4, &mut rng);
        let sigma = random_spd(4, &mut rng);
        let n = 37;
        let lhs = nll(&sigma_hat, n, &sigma).unwrap() - nll(&sigma_hat, n, &sigma_hat).unwrap();
        let rhs = 0.5 * n as f64 * kl2(&sigma_hat, &sigma).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-10, max_relative = 1e-10);
    }

    #[test]
    fn nll_offset_equivalence() {
        let mut rng = StdRng::seed_from_u64(21);
        let sigma_hat = random_spd(3, &mut rng);
        let sigma = random_spd(3, &mut rng);
        let sigma_ref = random_spd(3, &mut rng);
        let n = 50;
        let lhs = nll(&sigma_hat, n, &sigma).unwrap() - nll(&sigma_hat, n, &sigma_ref).unwrap();
        let rhs = 0.5 * n as f64
            * (kl2(&sigma_hat, &sigma).unwrap() - kl2(&sigma_hat, &sigma_ref).unwrap());
        assert_relative_eq!(lhs, rhs, epsilon = 1e-9, max_relative = 1e-9);
    }

    #[test]
    fn nll_bound_consistency() {
        let mut rng = StdRng::seed_from_u64(30);
        let sigma_hat = random_spd(4, &mut rng);
        let n = 25;
        let ce = CovarianceEstimate::new(sigma_hat.clone(), n).unwrap();
        let delta = 0.3;
        let bound = delta_to_nll_bound(&ce, delta);
        let at_center = nll(&sigma_hat, n, &sigma_hat).unwrap();
        assert_relative_eq!(bound, at_center + 0.5 * n as f64 * delta, max_relative = 1e-12);
    }

    #[test]
    fn covariance_estimate_validation() {
        let bad = sym(&[&[1.0], &[2.0, 1.0]]);
        assert!(matches!(
            CovarianceEstimate::new(bad, 10),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            CovarianceEstimate::new(SymMatrix::identity(2), 1),
            Err(Error::InvalidArgument(_))
        ));
        let ce = CovarianceEstimate::new(SymMatrix::from_diagonal(&[2.0, 1.0]), 10).unwrap();
        assert_relative_eq!(ce.logdet(), 2.0f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn problem_spec_validation() {
        assert!(ProblemSpec::new(0.0, 0.1).is_err());
        assert!(ProblemSpec::new(0.5, -0.1).is_err());
        assert!(ProblemSpec::new(0.5, f64::NAN).is_err());

        let spec = ProblemSpec::new(0.5, 0.1).unwrap();
        let diag = CovarianceEstimate::new(SymMatrix::from_diagonal(&[1.0, 2.0]), 10).unwrap();
        assert!(matches!(
            spec.validate_against(&diag),
            Err(Error::DiagonalCovariance { .. })
        ));

        let corr = CovarianceEstimate::new(sym(&[&[1.0], &[0.5, 1.0]]), 10).unwrap();
        // delta_max = log(4/3) ~ 0.2877
        assert!(spec.validate_against(&corr).is_ok());
        let too_big = ProblemSpec::new(0.5, 0.3).unwrap();
        assert!(matches!(
            too_big.validate_against(&corr),
            Err(Error::InfeasibleTolerance { .. })
        ));
    }
}
