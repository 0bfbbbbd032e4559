//! Primal reconstruction from a dual optimum, with conditions-of-optimality
//! diagnostics.
//!
//! A converged dual point `(lambda*, U*)` determines the worst-case
//! concentration matrix `X* = (lambda*^-1 ofd(U*) + sigma_hat)^-1`. Its
//! split into a sparse part `S` and a low-rank part `L` follows the
//! multiplier's structure: off-diagonal entries of `S` may be nonzero only
//! where `|U*_ij|` sits on the box boundary `gamma/2`, and the range of `L`
//! is confined to the kernel of `U*`. Within those constraints `L` is fitted
//! by least squares so that `S = X* + L` vanishes off the detected support.
//! Nothing is assumed silently: every residual the construction leaves
//! behind is measured and reported.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::divergence::{kl2_of_x, CovarianceEstimate, ProblemSpec};
use crate::dual::{dual_objective, DualPoint};
use crate::error::{Error, Result};
use crate::sym::SymMatrix;

/// Default for [`RecoveryConfig::rank_rel_tol`] and the classical solver's
/// rank count. An eigenvalue of `L` under 5% of the top one is reported in
/// the spectrum but not counted as a latent variable: reading the latent
/// count off the leading eigenvalues of `L` only makes sense up to the
/// scale at which solver bias and fit residue live, and trailing
/// eigenvalues a few percent of the top are exactly that residue.
pub const RANK_REL_TOL_DEFAULT: f64 = 0.05;

/// Thresholds of the reconstruction, all relative.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RecoveryConfig {
    /// An off-diagonal pair joins the support when
    /// `|U*_ij| >= (gamma/2)(1 - support_rel_tol)`.
    pub support_rel_tol: f64,
    /// Eigenvalues of `U*` below `kernel_rel_tol * max_eig` span the kernel.
    pub kernel_rel_tol: f64,
    /// Eigenvalues of `L` above `rank_rel_tol * max_eig(L)` count toward
    /// `rank_L`.
    pub rank_rel_tol: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            support_rel_tol: 1e-4,
            kernel_rel_tol: 1e-4,
            rank_rel_tol: RANK_REL_TOL_DEFAULT,
        }
    }
}

/// Measured optimality conditions. Every field is reported as computed;
/// nothing is clamped.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KktReport {
    /// `|kl2_of_x(sigma_hat, X*) - delta|`; small iff the divergence
    /// constraint is active, which `lambda* > 0` implies.
    pub kl_gap: f64,
    /// `|tr(L) + gamma h1(S) - (-J*)|`, the primal-dual objective mismatch.
    pub duality_gap: f64,
    /// `tr(U* L)`, complementary slackness of the semidefinite constraint.
    pub comp_slack: f64,
    /// `min over support of (gamma/2 - |U*_ij|)`; 0 when the support is
    /// empty.
    pub support_margin: f64,
    /// Largest off-diagonal magnitude of `X* + L` outside the support,
    /// before those entries are zeroed into `S`.
    pub lowrank_residual: f64,
    /// Smallest eigenvalue of `S - L`.
    pub min_eig_s_minus_l: f64,
    /// Set when `S - L` is not positive definite after off-support zeroing.
    pub feasibility_violation: bool,
    /// Set when the least-squares fit of `L` was rank deficient and the
    /// minimum-norm solution was taken.
    pub rank_deficient_ls: bool,
}

/// Sparse-plus-low-rank split of a concentration matrix.
#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub m: usize,
    pub gamma: f64,
    pub delta: f64,
    pub lambda_star: f64,
    #[serde(rename = "rank_L")]
    pub rank_l: usize,
    /// Unordered off-diagonal pairs `(i, j)`, `i < j`, where `S` may be
    /// nonzero.
    pub support: Vec<(usize, usize)>,
    #[serde(rename = "S")]
    pub s: SymMatrix,
    #[serde(rename = "L")]
    pub l: SymMatrix,
    #[serde(rename = "X")]
    pub x: SymMatrix,
    pub kkt: KktReport,
    /// `X^-1`, the identified covariance. Not serialized; derivable.
    #[serde(skip)]
    pub sigma_m: SymMatrix,
}

impl Decomposition {
    /// Map a split solved in correlation coordinates back to the original
    /// scale, given the standard deviations from
    /// [`SymMatrix::correlation`]. Concentration-side parts (`S`, `L`, `X`)
    /// transform by `1/sd` congruence, the covariance side by `sd`. Support
    /// and rank are invariant; `kkt` keeps the solved-problem values.
    pub fn unstandardize(&mut self, sd: &[f64]) {
        let inv: Vec<f64> = sd.iter().map(|s| 1.0 / s).collect();
        self.s = self.s.diag_congruence(&inv);
        self.l = self.l.diag_congruence(&inv);
        self.x = self.x.diag_congruence(&inv);
        self.sigma_m = self.sigma_m.diag_congruence(sd);
    }
}

/// `X* = (lambda^-1 ofd(U) + sigma_hat)^-1`.
pub fn primal_x(p_star: &DualPoint, ce: &CovarianceEstimate) -> Result<SymMatrix> {
    let w = &p_star.u.offdiag_part().scaled(1.0 / p_star.lambda) + ce.sigma_hat();
    w.inverse_spd().map_err(|_| Error::InfeasiblePoint {
        reason: "lambda^-1 ofd(U) + sigma_hat is not positive definite".into(),
    })
}

/// Off-diagonal pairs whose multiplier sits on the box boundary: the only
/// places the sparse part may be nonzero.
pub fn detect_support(u_star: &SymMatrix, gamma: f64, rel_tol: f64) -> Vec<(usize, usize)> {
    let threshold = (gamma / 2.0) * (1.0 - rel_tol);
    let m = u_star.dim();
    let mut support = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            if u_star.entry(i, j).abs() >= threshold {
                support.push((i, j));
            }
        }
    }
    support
}

/// Orthonormal basis of the (numerical) kernel of `U*`: eigenvectors whose
/// eigenvalues are at most `rel_tol * max_eig`. The low-rank part must have
/// its range inside this space. May have zero columns.
pub fn detect_kernel(u_star: &SymMatrix, rel_tol: f64) -> DMatrix<f64> {
    let eig = u_star.eig();
    let cutoff = rel_tol * eig.max().max(0.0);
    let r = eig.values.iter().take_while(|&&w| w <= cutoff).count();
    let m = u_star.dim();
    let mut v = DMatrix::zeros(m, r);
    for k in 0..r {
        v.set_column(k, &eig.vectors.column(k));
    }
    v
}

/// Result of the constrained least-squares fit of the low-rank part.
#[derive(Debug, Clone)]
pub struct LowRankFit {
    pub l: SymMatrix,
    pub rank_deficient: bool,
}

/// Fit `L = V M V^T` by minimizing the off-support off-diagonal entries of
/// `X* + V M V^T` in least squares over the free entries of symmetric `M`,
/// then project `M` onto the positive-semidefinite cone.
pub fn fit_l(x_star: &SymMatrix, v: &DMatrix<f64>, support: &[(usize, usize)]) -> LowRankFit {
    let m = x_star.dim();
    let r = v.ncols();
    if r == 0 {
        return LowRankFit {
            l: SymMatrix::zeros(m),
            rank_deficient: false,
        };
    }

    let in_support: std::collections::HashSet<(usize, usize)> =
        support.iter().copied().collect();
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            if !in_support.contains(&(i, j)) {
                pairs.push((i, j));
            }
        }
    }
    if pairs.is_empty() {
        // no residual to cancel: minimum-norm answer is L = 0, and with
        // free unknowns left the system is trivially underdetermined
        return LowRankFit {
            l: SymMatrix::zeros(m),
            rank_deficient: true,
        };
    }

    // free entries of M: (a, b) with a <= b
    let mut unknowns = Vec::new();
    for a in 0..r {
        for b in a..r {
            unknowns.push((a, b));
        }
    }
    let mut a_mat = DMatrix::zeros(pairs.len(), unknowns.len());
    let mut rhs = DVector::zeros(pairs.len());
    for (row, &(i, j)) in pairs.iter().enumerate() {
        for (col, &(a, b)) in unknowns.iter().enumerate() {
            a_mat[(row, col)] = if a == b {
                v[(i, a)] * v[(j, a)]
            } else {
                v[(i, a)] * v[(j, b)] + v[(i, b)] * v[(j, a)]
            };
        }
        rhs[row] = -x_star.entry(i, j);
    }

    let svd = a_mat.svd(true, true);
    let eps = 1e-12
        * svd
            .singular_values
            .iter()
            .fold(0.0f64, |acc, &s| acc.max(s))
            .max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let sol = svd.solve(&rhs, eps).unwrap_or_else(|_| DVector::zeros(unknowns.len()));
    let rank_deficient = rank < unknowns.len();

    let mut m_mat = SymMatrix::zeros(r);
    for (col, &(a, b)) in unknowns.iter().enumerate() {
        m_mat.set(a, b, sol[col]);
    }
    let m_psd = m_mat.psd_project();
    let l_dense = v * m_psd.as_dmatrix() * v.transpose();
    LowRankFit {
        l: SymMatrix::from_dense_mirror(l_dense),
        rank_deficient,
    }
}

/// `h1`: sum of absolute off-diagonal values, each unordered pair once.
fn h1(s: &SymMatrix) -> f64 {
    s.offdiag_abs_sum()
}

/// Build the decomposition and measure every optimality condition.
pub fn assemble(
    x_star: &SymMatrix,
    l: &SymMatrix,
    support: &[(usize, usize)],
    rank_deficient_ls: bool,
    p_star: &DualPoint,
    ce: &CovarianceEstimate,
    spec: &ProblemSpec,
    cfg: &RecoveryConfig,
) -> Result<Decomposition> {
    let m = x_star.dim();
    let s_raw = x_star + l;
    let in_support: std::collections::HashSet<(usize, usize)> =
        support.iter().copied().collect();

    let mut s = s_raw.diag_part();
    let mut lowrank_residual = 0.0f64;
    for i in 0..m {
        for j in (i + 1)..m {
            if in_support.contains(&(i, j)) {
                s.set(i, j, s_raw.entry(i, j));
            } else {
                lowrank_residual = lowrank_residual.max(s_raw.entry(i, j).abs());
            }
        }
    }

    let s_minus_l = &s - l;
    let min_eig_s_minus_l = s_minus_l.eig().min();
    let feasibility_violation = !(min_eig_s_minus_l > 0.0);

    let l_eig = l.eig();
    let rank_cutoff = cfg.rank_rel_tol * l_eig.max().max(0.0);
    let rank_l = l_eig.values.iter().filter(|&&w| w > rank_cutoff).count();

    let kl_gap = (kl2_of_x(ce.sigma_hat(), x_star)? - spec.delta).abs();
    let dual_value = -dual_objective(p_star, ce, spec)?;
    let primal_value = l.trace() + spec.gamma * h1(&s);
    let duality_gap = (primal_value - dual_value).abs();
    let comp_slack = p_star.u.inner(l);
    let support_margin = support
        .iter()
        .map(|&(i, j)| spec.gamma / 2.0 - p_star.u.entry(i, j).abs())
        .fold(f64::NAN, f64::min);
    let support_margin = if support.is_empty() { 0.0 } else { support_margin };

    let sigma_m = x_star.inverse_spd()?;
    Ok(Decomposition {
        m,
        gamma: spec.gamma,
        delta: spec.delta,
        lambda_star: p_star.lambda,
        rank_l,
        support: support.to_vec(),
        s,
        l: l.clone(),
        x: x_star.clone(),
        kkt: KktReport {
            kl_gap,
            duality_gap,
            comp_slack,
            support_margin,
            lowrank_residual,
            min_eig_s_minus_l,
            feasibility_violation,
            rank_deficient_ls,
        },
        sigma_m,
    })
}

/// Full pipeline from a dual optimum to a diagnosed decomposition.
pub fn recover(
    p_star: &DualPoint,
    ce: &CovarianceEstimate,
    spec: &ProblemSpec,
    cfg: &RecoveryConfig,
) -> Result<Decomposition> {
    let x_star = primal_x(p_star, ce)?;
    let support = detect_support(&p_star.u, spec.gamma, cfg.support_rel_tol);
    let v = detect_kernel(&p_star.u, cfg.kernel_rel_tol);
    let fit = fit_l(&x_star, &v, &support);
    assemble(
        &x_star,
        &fit.l,
        &support,
        fit.rank_deficient,
        p_star,
        ce,
        spec,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::delta_max;
    use crate::dual::{solve_dual, SolverConfig};
    use crate::testutil::{random_spd, sym};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn primal_x_identity_multiplier() {
        let mut rng = StdRng::seed_from_u64(1);
        let sigma = random_spd(4, &mut rng);
        let ce = CovarianceEstimate::new(sigma.clone(), 50).unwrap();
        let p = DualPoint::initial(4);
        let x = primal_x(&p, &ce).unwrap();
        assert!((&x - &sigma.inverse_spd().unwrap()).frobenius_norm() <= 1e-10);
    }

    #[test]
    fn primal_x_closed_form_pair() {
        let ce = CovarianceEstimate::new(SymMatrix::identity(2), 50).unwrap();
        let p = DualPoint {
            lambda: 2.0,
            u: sym(&[&[1.0], &[0.2, 1.0]]),
        };
        let x = primal_x(&p, &ce).unwrap();
        let scale = 1.0 / 0.99;
        assert_relative_eq!(x.entry(0, 0), scale, epsilon = 1e-12);
        assert_relative_eq!(x.entry(0, 1), -0.1 * scale, epsilon = 1e-12);
    }

    #[test]
    fn kl_constraint_active_at_optimum() {
        let mut rng = StdRng::seed_from_u64(2);
        let sigma = random_spd(5, &mut rng);
        let dmax = delta_max(&sigma).unwrap();
        let ce = CovarianceEstimate::new(sigma, 80).unwrap();
        let spec = ProblemSpec::new(0.5, 0.5 * dmax).unwrap();
        let (p, trace) = solve_dual(&ce, &spec, &SolverConfig::default(), None).unwrap();
        assert!(trace.converged());
        let x = primal_x(&p, &ce).unwrap();
        let kl = kl2_of_x(ce.sigma_hat(), &x).unwrap();
        assert!((kl - spec.delta).abs() <= 1e-5, "kl gap {}", (kl - spec.delta).abs());
    }

    #[test]
    fn support_identity_is_empty() {
        assert!(detect_support(&SymMatrix::identity(4), 1.0, 1e-4).is_empty());
    }

    #[test]
    fn support_threshold_arithmetic() {
        let mut u = SymMatrix::identity(4);
        u.set(0, 1, 0.5);
        u.set(0, 2, 0.49999);
        u.set(1, 2, 0.3);
        let s = detect_support(&u, 1.0, 1e-3);
        assert_eq!(s, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn kernel_of_positive_definite_is_empty() {
        let mut rng = StdRng::seed_from_u64(3);
        let u = random_spd(5, &mut rng);
        assert_eq!(detect_kernel(&u, 1e-4).ncols(), 0);
    }

    #[test]
    fn kernel_of_rank_deficient_projector() {
        // U = I - vv^T has exactly one zero eigenvalue with eigenvector v
        let v = [0.6, 0.8];
        let u = SymMatrix::from_lower_fn(2, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - v[i] * v[j]
        });
        let basis = detect_kernel(&u, 1e-4);
        assert_eq!(basis.ncols(), 1);
        let dot: f64 = (0..2).map(|i| basis[(i, 0)] * v[i]).sum();
        assert_relative_eq!(dot.abs(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn fit_l_empty_kernel_gives_zero() {
        let x = SymMatrix::identity(4);
        let v = DMatrix::zeros(4, 0);
        let fit = fit_l(&x, &v, &[]);
        assert_eq!(fit.l.max_abs(), 0.0);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn fit_l_zero_residual_keeps_l_zero() {
        // off-diagonal of X lives entirely on the support: nothing to cancel
        let mut x = SymMatrix::from_diagonal(&[2.0, 2.0, 2.0, 2.0]);
        x.set(0, 1, 0.4);
        let support = vec![(0usize, 1usize)];
        let mut rng = StdRng::seed_from_u64(4);
        let g = DMatrix::from_fn(4, 1, |_, _| rng.random_range(-1.0..1.0));
        let v = g.qr().q();
        let fit = fit_l(&x, &v, &support);
        assert!(fit.l.max_abs() <= 1e-12);
    }

    #[test]
    fn fit_l_recovers_planted_lowrank() {
        let m = 6;
        let r = 2;
        let mut rng = StdRng::seed_from_u64(5);
        let g = DMatrix::from_fn(m, r, |_, _| rng.random_range(-1.0..1.0));
        let v = g.qr().q();
        let m0 = sym(&[&[0.8], &[0.2, 0.5]]);
        let l0 = SymMatrix::from_dense_mirror(&v * m0.as_dmatrix() * v.transpose());

        let support = vec![(0usize, 1usize), (2usize, 3usize)];
        let mut s0 = SymMatrix::from_diagonal(&[3.0; 6]);
        s0.set(0, 1, -0.4);
        s0.set(2, 3, 0.3);

        let x_star = &s0 - &l0;
        let fit = fit_l(&x_star, &v, &support);
        assert!(!fit.rank_deficient);
        assert!((&fit.l - &l0).frobenius_norm() <= 1e-8);
    }

    /// Planted-latent instance: the population covariance of a model whose
    /// concentration is sparse minus low-rank. Solving against it should
    /// reproduce the latent structure.
    fn latent_instance() -> (CovarianceEstimate, ProblemSpec) {
        let m = 5;
        let mut s0 = SymMatrix::from_diagonal(&[2.0; 5]);
        s0.set(0, 1, 0.4);
        s0.set(2, 4, -0.35);
        let f = [0.9, -0.7, 0.8, -0.6, 0.75];
        let mut l0 = SymMatrix::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                l0.set(i, j, 0.55 * f[i] * f[j]);
            }
        }
        let x0 = &s0 - &l0;
        assert!(x0.eig().min() > 0.05);
        let sigma = x0.inverse_spd().unwrap();
        let dmax = delta_max(&sigma).unwrap();
        let ce = CovarianceEstimate::new(sigma, 500).unwrap();
        let spec = ProblemSpec::new(0.64, 0.05 * dmax).unwrap();
        (ce, spec)
    }

    #[test]
    fn recover_full_pipeline_diagnostics() {
        let (ce, spec) = latent_instance();
        let mut cfg = SolverConfig::default();
        cfg.grad_tol = 1e-8;
        cfg.max_iters = 20000;
        let (p, trace) = solve_dual(&ce, &spec, &cfg, None).unwrap();
        assert!(trace.converged());
        let dec = recover(&p, &ce, &spec, &RecoveryConfig::default()).unwrap();

        assert!(dec.kkt.kl_gap <= 1e-5, "kl_gap {}", dec.kkt.kl_gap);
        assert!(
            dec.kkt.duality_gap <= 1e-4 * (1.0 + dec.lambda_star.abs()),
            "duality_gap {}",
            dec.kkt.duality_gap
        );
        assert!(
            dec.kkt.comp_slack <= 1e-5 * dec.l.trace() + 1e-10,
            "comp_slack {} tr(L) {}",
            dec.kkt.comp_slack,
            dec.l.trace()
        );
        assert!(!dec.kkt.feasibility_violation);

        // X == S - L up to the zeroed residual
        let diff = &(&dec.s - &dec.l) - &dec.x;
        assert!(diff.frobenius_norm() <= 1e-6 * dec.x.frobenius_norm());

        // off-support entries of S are bitwise zero
        let in_support: std::collections::HashSet<_> = dec.support.iter().copied().collect();
        for i in 0..dec.m {
            for j in (i + 1)..dec.m {
                if !in_support.contains(&(i, j)) {
                    assert_eq!(dec.s.entry(i, j), 0.0);
                }
            }
        }

        // the planted pattern is recovered: two sparse edges, one latent
        assert_eq!(dec.support, vec![(0, 1), (2, 4)]);
        assert!(dec.l.eig().min() >= -1e-8 * dec.l.frobenius_norm().max(1e-30));
        assert_eq!(dec.rank_l, 1);
    }

    #[test]
    fn assemble_flags_unexplained_offdiagonal() {
        // Empty support and no kernel: S must become diagonal, leaving all
        // of X's off-diagonal as residual.
        let mut rng = StdRng::seed_from_u64(6);
        let sigma = random_spd(3, &mut rng);
        let ce = CovarianceEstimate::new(sigma, 50).unwrap();
        let spec = ProblemSpec::new(0.5, 0.1).unwrap();
        let p = DualPoint {
            lambda: 1.0,
            u: SymMatrix::identity(3),
        };
        let x = primal_x(&p, &ce).unwrap();
        let dec = assemble(
            &x,
            &SymMatrix::zeros(3),
            &[],
            false,
            &p,
            &ce,
            &spec,
            &RecoveryConfig::default(),
        )
        .unwrap();
        assert_relative_eq!(
            dec.kkt.lowrank_residual,
            x.offdiag_part().max_abs(),
            epsilon = 1e-14
        );
        assert_eq!(dec.kkt.support_margin, 0.0);
        assert_eq!(dec.rank_l, 0);
    }

    #[test]
    fn unstandardize_congruence_consistency() {
        let (ce, spec) = latent_instance();
        let (p, _) = solve_dual(&ce, &spec, &SolverConfig::default(), None).unwrap();
        let mut dec = recover(&p, &ce, &spec, &RecoveryConfig::default()).unwrap();
        let reference = dec.clone();
        let sd = vec![2.0, 0.5, 1.5, 1.0, 3.0, 0.25];
        dec.unstandardize(&sd);
        // X stays the S - L split and sigma_m stays its inverse
        let split = &dec.s - &dec.l;
        assert!((&split - &dec.x).frobenius_norm() <= 1e-12 * dec.x.frobenius_norm());
        let prod = dec.x.as_dmatrix() * dec.sigma_m.as_dmatrix();
        assert!((prod - nalgebra::DMatrix::identity(dec.m, dec.m)).norm() <= 1e-8);
        // support and rank untouched, and the inverse map restores the split
        assert_eq!(dec.support, reference.support);
        assert_eq!(dec.rank_l, reference.rank_l);
        let inv: Vec<f64> = sd.iter().map(|s| 1.0 / s).collect();
        dec.unstandardize(&inv);
        assert!((&dec.s - &reference.s).frobenius_norm() <= 1e-12);
        assert!((&dec.l - &reference.l).frobenius_norm() <= 1e-12);
    }

    #[test]
    fn decomposition_json_shape() {
        let (ce, spec) = latent_instance();
        let (p, _) = solve_dual(&ce, &spec, &SolverConfig::default(), None).unwrap();
        let dec = recover(&p, &ce, &spec, &RecoveryConfig::default()).unwrap();
        let json = serde_json::to_value(&dec).unwrap();
        for key in [
            "m",
            "gamma",
            "delta",
            "lambda_star",
            "rank_L",
            "support",
            "S",
            "L",
            "X",
            "kkt",
        ] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
        assert!(json.get("sigma_m").is_none());
        let s = json.get("S").unwrap();
        assert!(s.is_array());
        assert_eq!(s.as_array().unwrap().len(), dec.m);
        for pair in json.get("support").unwrap().as_array().unwrap() {
            assert_eq!(pair.as_array().unwrap().len(), 2);
        }
    }
}
