//! Dense symmetric matrices and the spectral kernels built on them.
//!
//! `SymMatrix` is the carrier type for every matrix in this crate: sample
//! covariances, concentration matrices, multipliers, and the sparse/low-rank
//! parts of a decomposition. The lower triangle is authoritative; the upper
//! triangle always mirrors it, so eigendecompositions and Cholesky
//! factorizations never see drift-induced asymmetry.

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dense real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Zero matrix of dimension `n`.
    pub fn zeros(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
        }
    }

    /// Identity matrix of dimension `n`.
    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    /// Diagonal matrix from the given entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            m: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        }
    }

    /// Build from a closure evaluated on the lower triangle (`i >= j`);
    /// the upper triangle mirrors it.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self { m }
    }

    /// Wrap a dense matrix, mirroring the lower triangle into the upper.
    /// The upper triangle of `m` is ignored.
    pub fn from_dense_mirror(mut m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                m[(j, i)] = m[(i, j)];
            }
        }
        Self { m }
    }

    /// Validate a dense matrix as symmetric (within `tol` relative to its
    /// largest entry) with finite entries, then adopt it mirror-lower.
    pub fn from_dense_checked(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                left: m.nrows(),
                right: m.ncols(),
            });
        }
        let n = m.nrows();
        let mut scale = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFiniteData { row: i, col: j });
                }
                scale = scale.max(v.abs());
            }
        }
        let bound = tol * scale.max(1.0);
        for j in 0..n {
            for i in (j + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > bound {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric: entry ({i},{j}) = {} vs ({j},{i}) = {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(Self::from_dense_mirror(m))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    /// Set entry `(i, j)` and its mirror.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[(i, j)] = v;
        self.m[(j, i)] = v;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Diagonal projection: same diagonal, zero elsewhere.
    pub fn diag_part(&self) -> SymMatrix {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.m[(i, i)];
        }
        Self { m }
    }

    /// Off-diagonal projection: zero diagonal, same off-diagonal entries.
    /// `diag_part(a) + offdiag_part(a)` reconstructs `a` bitwise.
    pub fn offdiag_part(&self) -> SymMatrix {
        let mut m = self.m.clone();
        for i in 0..self.dim() {
            m[(i, i)] = 0.0;
        }
        Self { m }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)]).sum()
    }

    /// Trace inner product `tr(A B)`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Sum of absolute values of strictly-off-diagonal entries, counting each
    /// unordered pair once.
    pub fn offdiag_abs_sum(&self) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for j in 0..n {
            for i in (j + 1)..n {
                s += self.m[(i, j)].abs();
            }
        }
        s
    }

    pub fn scaled(&self, s: f64) -> SymMatrix {
        Self { m: &self.m * s }
    }

    /// Congruence by a diagonal matrix: entries become `d_i * a_ij * d_j`.
    /// With `d_i = 1/sqrt(a_ii)` this is the correlation rescaling.
    pub fn diag_congruence(&self, d: &[f64]) -> SymMatrix {
        assert_eq!(d.len(), self.dim());
        Self::from_lower_fn(self.dim(), |i, j| d[i] * self.m[(i, j)] * d[j])
    }

    /// Correlation matrix together with the standard deviations `sqrt(a_ii)`
    /// that undo the rescaling. Requires a strictly positive diagonal.
    pub fn correlation(&self) -> Result<(SymMatrix, Vec<f64>)> {
        let n = self.dim();
        let mut sd = Vec::with_capacity(n);
        for i in 0..n {
            let v = self.m[(i, i)];
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "diagonal entry {i} is {v}, cannot standardize"
                )));
            }
            sd.push(v.sqrt());
        }
        let inv: Vec<f64> = sd.iter().map(|s| 1.0 / s).collect();
        Ok((self.diag_congruence(&inv), sd))
    }

    /// Cholesky factorization `A = L Lᵀ`. Success doubles as the
    /// positive-definiteness test; failure reports the first leading minor
    /// whose pivot is non-positive (or non-finite).
    pub fn cholesky(&self) -> Result<CholFactor> {
        let n = self.dim();
        let mut l = self.m.clone();
        for j in 0..n {
            let mut d = l[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { minor: j + 1, dim: n });
            }
            let root = d.sqrt();
            l[(j, j)] = root;
            for i in (j + 1)..n {
                let mut v = l[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = v / root;
            }
        }
        // zero the strict upper triangle
        for j in 0..n {
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
        }
        Ok(CholFactor { l })
    }

    /// `log|A|` via Cholesky; errors iff `A` is not positive definite.
    pub fn cholesky_logdet(&self) -> Result<f64> {
        Ok(self.cholesky()?.logdet())
    }

    /// Symmetric eigendecomposition with eigenvalues sorted ascending and
    /// matching orthonormal eigenvector columns.
    pub fn eig(&self) -> SymEigen {
        let se = nalgebra::SymmetricEigen::new(self.m.clone());
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let values: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &se.eigenvectors.column(src));
        }
        SymEigen { values, vectors }
    }

    /// Frobenius-nearest positive semidefinite matrix: negative eigenvalues
    /// are clipped to zero.
    pub fn psd_project(&self) -> SymMatrix {
        let eig = self.eig();
        let clipped: Vec<f64> = eig.values.iter().map(|&w| w.max(0.0)).collect();
        eig.reconstruct(&clipped)
    }

    /// Inverse of a symmetric positive definite matrix.
    pub fn inverse_spd(&self) -> Result<SymMatrix> {
        Ok(self.cholesky()?.inverse())
    }
}

impl std::ops::Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m + &rhs.m }
    }
}

impl std::ops::Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m - &rhs.m }
    }
}

impl std::ops::Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        SymMatrix { m: -&self.m }
    }
}

// JSON form: array of rows, row-major.
impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| self.m[(i, j)]).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(D::Error::custom(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        SymMatrix::from_dense_checked(m, 1e-8).map_err(D::Error::custom)
    }
}

/// Lower-triangular Cholesky factor of a positive definite matrix.
pub struct CholFactor {
    l: DMatrix<f64>,
}

impl CholFactor {
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `log|A| = 2 Σ log L_ii`.
    pub fn logdet(&self) -> f64 {
        (0..self.l.nrows()).map(|i| self.l[(i, i)].ln()).sum::<f64>() * 2.0
    }

    /// Solve `A x = b` in place via forward/back substitution.
    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        let n = self.l.nrows();
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= self.l[(i, k)] * b[k];
            }
            b[i] = v / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n {
                v -= self.l[(k, i)] * b[k];
            }
            b[i] = v / self.l[(i, i)];
        }
    }

    /// `tr(A⁻¹ B)` without forming the inverse.
    pub fn trace_solve(&self, b: &SymMatrix) -> f64 {
        let n = self.l.nrows();
        let mut acc = 0.0;
        let mut col = DVector::zeros(n);
        for j in 0..n {
            for i in 0..n {
                col[i] = b.entry(i, j);
            }
            self.solve_in_place(&mut col);
            acc += col[j];
        }
        acc
    }

    /// `A⁻¹`, symmetric positive definite.
    pub fn inverse(&self) -> SymMatrix {
        let n = self.l.nrows();
        let mut inv = DMatrix::zeros(n, n);
        let mut col = DVector::zeros(n);
        for j in 0..n {
            col.fill(0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            inv.set_column(j, &col);
        }
        SymMatrix::from_dense_mirror(inv)
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V diag(w) Vᵀ` for replacement eigenvalues `w`.
    pub fn reconstruct(&self, values: &[f64]) -> SymMatrix {
        let mut scaled = self.vectors.clone();
        for (k, &w) in values.iter().enumerate() {
            let col = self.vectors.column(k) * w;
            scaled.set_column(k, &col);
        }
        SymMatrix::from_dense_mirror(&scaled * self.vectors.transpose())
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}
