//! Projected-gradient solver for the dual of the robust decomposition
//! problem.
//!
//! The dual variables are a scalar multiplier `lambda > 0` for the divergence
//! budget and a symmetric multiplier `U` confined to the compact set
//! `{U >= 0, dd(U) = I, |U_ij| <= gamma/2}`. Minimizing
//!
//! ```text
//! J(lambda, U) = -lambda (log|W| - log|sigma_hat| - delta),
//! W = lambda^-1 ofd(U) + sigma_hat
//! ```
//!
//! over that set, staying inside the open region where `W` is positive
//! definite, yields the worst-case concentration matrix `X = W^-1` from which
//! the sparse and low-rank parts are recovered.

use serde::{Deserialize, Serialize};

use crate::divergence::{CovarianceEstimate, ProblemSpec};
use crate::error::{Error, Result};
use crate::sym::SymMatrix;

/// Iterates never drop below this multiplier value. The optimizer itself is
/// bounded away from zero, so the floor only guards intermediate steps.
pub const LAMBDA_FLOOR: f64 = 1e-10;

/// A point of the dual domain.
#[derive(Debug, Clone)]
pub struct DualPoint {
    pub lambda: f64,
    pub u: SymMatrix,
}

impl DualPoint {
    /// Canonical starting point: `lambda = 1`, `U = I`. Always feasible
    /// because `W` collapses to the sample covariance.
    pub fn initial(m: usize) -> Self {
        Self {
            lambda: 1.0,
            u: SymMatrix::identity(m),
        }
    }

    /// Check all membership conditions within `tol`.
    pub fn validate(&self, ce: &CovarianceEstimate, gamma: f64, tol: f64) -> Result<()> {
        let m = self.u.dim();
        if m != ce.dim() {
            return Err(Error::DimensionMismatch {
                left: m,
                right: ce.dim(),
            });
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InfeasiblePoint {
                reason: format!("lambda = {} is not positive", self.lambda),
            });
        }
        for i in 0..m {
            if (self.u.entry(i, i) - 1.0).abs() > tol {
                return Err(Error::InfeasiblePoint {
                    reason: format!("U[{i},{i}] = {} differs from 1", self.u.entry(i, i)),
                });
            }
            for j in 0..i {
                if self.u.entry(i, j).abs() > gamma / 2.0 + tol {
                    return Err(Error::InfeasiblePoint {
                        reason: format!(
                            "|U[{i},{j}]| = {} exceeds gamma/2 = {}",
                            self.u.entry(i, j).abs(),
                            gamma / 2.0
                        ),
                    });
                }
            }
        }
        let min_eig = self.u.eig().min();
        if min_eig < -tol {
            return Err(Error::InfeasiblePoint {
                reason: format!("U has negative eigenvalue {min_eig}"),
            });
        }
        if w_matrix(self, ce.sigma_hat()).cholesky().is_err() {
            return Err(Error::InfeasiblePoint {
                reason: "lambda^-1 ofd(U) + sigma_hat is not positive definite".into(),
            });
        }
        Ok(())
    }
}

/// Tuning knobs of the projected-gradient loop.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop when the scaled gradient-mapping norm falls below this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Multiplicative step shrink while backtracking.
    pub backtrack_factor: f64,
    /// Cap on alternating-projection sweeps inside `project_u`.
    pub dykstra_iters: usize,
    /// Successive-iterate change at which `project_u` stops.
    pub dykstra_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iters: 5000,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            dykstra_iters: 500,
            dykstra_tol: 1e-10,
        }
    }
}

/// Why the main loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No backtracking step achieved sufficient decrease.
    Stalled,
}

/// One accepted iterate. `step` is the length that produced it (0 for the
/// starting point); `pgrad_norm` is the scaled gradient-mapping norm tested
/// for termination.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub pgrad_norm: f64,
    pub step: f64,
    pub lambda: f64,
}

/// Full iteration history of a dual solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
}

impl SolverTrace {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map(|r| r.objective).unwrap_or(f64::NAN)
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map(|r| r.iter).unwrap_or(0)
    }
}

fn w_matrix(p: &DualPoint, sigma_hat: &SymMatrix) -> SymMatrix {
    &p.u.offdiag_part().scaled(1.0 / p.lambda) + sigma_hat
}

/// `J(lambda, U)`; fails with `InfeasiblePoint` when `W` is not positive
/// definite.
pub fn dual_objective(p: &DualPoint, ce: &CovarianceEstimate, spec: &ProblemSpec) -> Result<f64> {
    let w = w_matrix(p, ce.sigma_hat());
    let logdet_w = w.cholesky().map_err(infeasible_w)?.logdet();
    Ok(-p.lambda * (logdet_w - ce.logdet() - spec.delta))
}

fn infeasible_w(_: Error) -> Error {
    Error::InfeasiblePoint {
        reason: "lambda^-1 ofd(U) + sigma_hat is not positive definite".into(),
    }
}

/// Gradient of `J` at `p`. The `U` block lives on the off-diagonal
/// coordinates only (the diagonal is pinned), so it is returned with a zero
/// diagonal.
pub fn dual_gradient(
    p: &DualPoint,
    ce: &CovarianceEstimate,
    spec: &ProblemSpec,
) -> Result<(f64, SymMatrix)> {
    let (g_lambda, g_u, ..) = gradient_parts(p, ce, spec)?;
    Ok((g_lambda, g_u))
}

/// Gradient together with the pieces the solver reuses:
/// `(g_lambda, g_U, objective, X = W^-1)`.
fn gradient_parts(
    p: &DualPoint,
    ce: &CovarianceEstimate,
    spec: &ProblemSpec,
) -> Result<(f64, SymMatrix, f64, SymMatrix)> {
    let w = w_matrix(p, ce.sigma_hat());
    let chol = w.cholesky().map_err(infeasible_w)?;
    let bracket = chol.logdet() - ce.logdet() - spec.delta;
    let x = chol.inverse();
    let ofd_u = p.u.offdiag_part();
    let g_u = -&x.offdiag_part();
    let g_lambda = -bracket + x.inner(&ofd_u) / p.lambda;
    let objective = -p.lambda * bracket;
    Ok((g_lambda, g_u, objective, x))
}

/// Dense second-variation matrix of `J` at `p`, ordered as
/// `[lambda; vec(ofd(U))]`, size `(1 + m^2)^2`.
///
/// Exposed for diagnostics and tests; the solver itself is first-order.
/// Positive semidefinite with a one-dimensional null space spanned by
/// `[lambda; vec(ofd(U))]` itself.
pub fn dual_hessian(
    p: &DualPoint,
    ce: &CovarianceEstimate,
    spec: &ProblemSpec,
) -> Result<nalgebra::DMatrix<f64>> {
    const MAX_DIM: usize = 40;
    let m = p.u.dim();
    if m > MAX_DIM {
        return Err(Error::HessianTooLarge { dim: m, max: MAX_DIM });
    }
    let (.., x) = gradient_parts(p, ce, spec)?;
    let xd = x.as_dmatrix();
    let k = xd.kronecker(xd);
    let mm = m * m;
    let ofd_u = p.u.offdiag_part();
    let u_vec = nalgebra::DVector::from_fn(mm, |idx, _| ofd_u.entry(idx % m, idx / m));
    let ku = &k * &u_vec;
    let l = p.lambda;
    let mut h = nalgebra::DMatrix::zeros(1 + mm, 1 + mm);
    h[(0, 0)] = u_vec.dot(&ku) / (l * l * l);
    for i in 0..mm {
        h[(0, 1 + i)] = -ku[i] / (l * l);
        h[(1 + i, 0)] = h[(0, 1 + i)];
    }
    for i in 0..mm {
        for j in 0..mm {
            h[(1 + i, 1 + j)] = k[(i, j)] / l;
        }
    }
    Ok(h)
}

/// Result of projecting onto the multiplier set.
#[derive(Debug, Clone)]
pub struct Projection {
    pub u: SymMatrix,
    pub converged: bool,
    pub iterations: usize,
}

/// Frobenius projection onto `{U >= 0, dd(U) = I, |U_ij| <= gamma/2}` by
/// Dykstra's alternating scheme between the diagonal/box set and the
/// positive-semidefinite cone. The returned matrix satisfies the diagonal
/// and box constraints exactly and the eigenvalue constraint to within the
/// configured tolerance.
pub fn project_u(u_raw: &SymMatrix, gamma: f64, cfg: &SolverConfig) -> Projection {
    let bound = gamma / 2.0;
    let clamp_step = |a: &SymMatrix| -> SymMatrix {
        SymMatrix::from_lower_fn(a.dim(), |i, j| {
            if i == j {
                1.0
            } else {
                a.entry(i, j).clamp(-bound, bound)
            }
        })
    };

    let mut x = clamp_step(u_raw);
    let mut p = u_raw - &x;
    let mut q = SymMatrix::zeros(u_raw.dim());
    for it in 1..=cfg.dykstra_iters {
        let y = (&x + &p).psd_project();
        p = &(&x + &p) - &y;
        let x_next = clamp_step(&(&y + &q));
        q = &(&y + &q) - &x_next;
        let change = (&x_next - &x).frobenius_norm();
        x = x_next;
        if change <= cfg.dykstra_tol {
            return Projection {
                u: x,
                converged: true,
                iterations: it,
            };
        }
    }
    Projection {
        u: x,
        converged: false,
        iterations: cfg.dykstra_iters,
    }
}

fn point_norm(p: &DualPoint) -> f64 {
    (p.lambda * p.lambda + p.u.frobenius_norm().powi(2)).sqrt()
}

fn point_distance(a: &DualPoint, b: &DualPoint) -> f64 {
    let dl = a.lambda - b.lambda;
    (dl * dl + (&a.u - &b.u).frobenius_norm().powi(2)).sqrt()
}

fn step_project(
    p: &DualPoint,
    s: f64,
    g_lambda: f64,
    g_u: &SymMatrix,
    gamma: f64,
    cfg: &SolverConfig,
) -> DualPoint {
    let lambda = (p.lambda - s * g_lambda).max(LAMBDA_FLOOR);
    let raw = &p.u - &g_u.scaled(s);
    DualPoint {
        lambda,
        u: project_u(&raw, gamma, cfg).u,
    }
}

/// Minimize the dual objective by projected gradient descent with Armijo
/// backtracking from unit step.
///
/// Termination: scaled gradient-mapping norm at unit step below
/// `cfg.grad_tol` (converged), iteration budget exhausted, or no acceptable
/// step found (stalled). The trace records every accepted iterate; its
/// objective column is nonincreasing.
pub fn solve_dual(
    ce: &CovarianceEstimate,
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    p0: Option<DualPoint>,
) -> Result<(DualPoint, SolverTrace)> {
    spec.validate_against(ce)?;
    let mut p = p0.unwrap_or_else(|| DualPoint::initial(ce.dim()));
    if p.u.dim() != ce.dim() {
        return Err(Error::DimensionMismatch {
            left: p.u.dim(),
            right: ce.dim(),
        });
    }

    let mut records = Vec::new();
    let mut termination = Termination::MaxIterations;
    let (mut g_lambda, mut g_u, mut objective, _) = gradient_parts(&p, ce, spec)?;
    let mut accepted_step = 0.0;

    for iter in 0..=cfg.max_iters {
        let unit_trial = step_project(&p, 1.0, g_lambda, &g_u, spec.gamma, cfg);
        let pgrad_norm = point_distance(&p, &unit_trial) / point_norm(&p).max(1.0);
        records.push(TraceRecord {
            iter,
            objective,
            pgrad_norm,
            step: accepted_step,
            lambda: p.lambda,
        });
        if pgrad_norm <= cfg.grad_tol {
            termination = Termination::Converged;
            break;
        }
        if iter == cfg.max_iters {
            break;
        }

        let mut s = 1.0;
        let mut trial = unit_trial;
        let mut accepted = false;
        while s >= 1e-16 {
            if let Ok((t_gl, t_gu, t_obj, _)) = gradient_parts(&trial, ce, spec) {
                let decrease = g_lambda * (trial.lambda - p.lambda)
                    + g_u.inner(&(&trial.u - &p.u));
                if t_obj <= objective + cfg.armijo_c * decrease {
                    p = trial;
                    objective = t_obj;
                    g_lambda = t_gl;
                    g_u = t_gu;
                    accepted_step = s;
                    accepted = true;
                    break;
                }
            }
            s *= cfg.backtrack_factor;
            trial = step_project(&p, s, g_lambda, &g_u, spec.gamma, cfg);
        }
        if !accepted {
            termination = Termination::Stalled;
            break;
        }
    }

    Ok((
        p,
        SolverTrace {
            records,
            termination,
        },
    ))
}
