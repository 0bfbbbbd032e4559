//! Shared helpers for unit tests.

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::Rng;

use crate::sym::SymMatrix;

/// Small symmetric matrix from row literals (lower triangle is read).
pub(crate) fn sym(rows: &[&[f64]]) -> SymMatrix {
    SymMatrix::from_lower_fn(rows.len(), |i, j| rows[i][j])
}

pub(crate) fn random_sym(n: usize, rng: &mut StdRng) -> SymMatrix {
    SymMatrix::from_lower_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Well-conditioned random SPD matrix: Q diag(w) Qᵀ with w in [0.5, 2].
pub(crate) fn random_spd(n: usize, rng: &mut StdRng) -> SymMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        let col = q.column(k) * w[k];
        m += col * q.column(k).transpose();
    }
    SymMatrix::from_dense_mirror(m)
}
