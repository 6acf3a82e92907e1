//! Dense symmetric linear algebra.
//!
//! Every matrix that appears in the decomposition `Σ = Ω + Δ` is real and
//! symmetric, so the carrier type [`SymMatrix`] enforces symmetry at
//! construction and all spectral quantities go through a symmetric
//! eigendecomposition ([`eig_sym`]). Singular values are absolute
//! eigenvalues, re-sorted.

mod spectral;
mod text;

pub use spectral::{
    eig_sym, eig_sym_with, is_psd, ky_fan_norm, numerical_rank, numerical_rank_against,
    numerical_rank_with, off_diag, r_norm, singular_values, spectral_norm, svd_truncate, SymEig,
    RANK_TOL,
};
pub use text::{format_matrix, parse_matrix, read_matrix, write_matrix, ASYMMETRY_TOL};

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rank {r} out of range 1..={n}")]
    RankOutOfRange { r: usize, n: usize },
    #[error("symmetric eigensolver did not converge after {iterations} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix is not symmetric: max |A - A^T| = {asymmetry:e} exceeds {tolerance:e}")]
    Asymmetric { asymmetry: f64, tolerance: f64 },
    #[error("negative entry {value:e} at index {index} in a nonnegative diagonal")]
    NegativeDiagonal { index: usize, value: f64 },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Dense real symmetric `n x n` matrix.
///
/// Construction symmetrizes the input via `(A + A^T) / 2`, so
/// `get(i, j) == get(j, i)` holds bit for bit.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, MatrixError> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(MatrixError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        Ok(Self::symmetrize(m))
    }

    fn symmetrize(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut out = m;
        for j in 0..n {
            for i in (j + 1)..n {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        SymMatrix(out)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let n = rows.len();
        for row in rows {
            if row.len() != n {
                return Err(MatrixError::NotSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self, MatrixError> {
        if data.len() != n * n {
            return Err(MatrixError::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "SymMatrix dimension must be positive");
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "SymMatrix dimension must be positive");
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        assert!(!d.is_empty(), "SymMatrix dimension must be positive");
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Rank-one matrix `v v^T`.
    pub fn outer(v: &[f64]) -> Self {
        assert!(!v.is_empty(), "SymMatrix dimension must be positive");
        let n = v.len();
        SymMatrix(DMatrix::from_fn(n, n, |i, j| v[i] * v[j]))
    }

    /// `U diag(w) U^T` for a square or tall `U`.
    pub fn congruence(u: &DMatrix<f64>, w: &[f64]) -> Self {
        assert_eq!(u.ncols(), w.len());
        let mut scaled = u.clone();
        for (k, &wk) in w.iter().enumerate() {
            scaled.column_mut(k).scale_mut(wk);
        }
        Self::symmetrize(&scaled * u.transpose())
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// `<A, B> = tr(A^T B)`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.n(), other.n());
        self.0.dot(&other.0)
    }

    pub fn max_abs_offdiag(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in (j + 1)..n {
                worst = worst.max(self.0[(i, j)].abs());
            }
        }
        worst
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.max_abs_offdiag() <= tol
    }

    pub fn scale(&self, alpha: f64) -> SymMatrix {
        SymMatrix(&self.0 * alpha)
    }

    pub fn add_diagonal(&self, d: &[f64]) -> SymMatrix {
        assert_eq!(d.len(), self.n());
        let mut m = self.0.clone();
        for (i, &di) in d.iter().enumerate() {
            m[(i, i)] += di;
        }
        SymMatrix(m)
    }

    /// `A + alpha I`
    pub fn shift(&self, alpha: f64) -> SymMatrix {
        self.add_diagonal(&vec![alpha; self.n()])
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{}", self.0)
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = MatrixError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        SymMatrix(-&self.0)
    }
}

/// Diagonal matrix `diag*(d)`; carries the noise covariance `Δ`.
///
/// The `nonneg` flag records membership in the nonnegative diagonal cone.
/// It is computed at construction, so it is set exactly when `min(d) >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagMatrix {
    d: Vec<f64>,
    nonneg: bool,
}

impl DiagMatrix {
    pub fn new(d: Vec<f64>) -> Self {
        assert!(!d.is_empty(), "DiagMatrix dimension must be positive");
        let nonneg = d.iter().all(|&x| x >= 0.0);
        DiagMatrix { d, nonneg }
    }

    /// Rejects any negative entry.
    pub fn nonneg(d: Vec<f64>) -> Result<Self, MatrixError> {
        if let Some((index, &value)) = d.iter().enumerate().find(|(_, &x)| x < 0.0) {
            return Err(MatrixError::NegativeDiagonal { index, value });
        }
        Ok(Self::new(d))
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn scaled_identity(n: usize, alpha: f64) -> Self {
        Self::new(vec![alpha; n])
    }

    /// Diagonal part of a symmetric matrix.
    pub fn of(a: &SymMatrix) -> Self {
        Self::new(a.diagonal())
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }

    pub fn is_nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn is_zero(&self) -> bool {
        self.d.iter().all(|&x| x == 0.0)
    }

    pub fn min(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn trace(&self) -> f64 {
        self.d.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.d.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self::new(self.d.iter().map(|x| alpha * x).collect())
    }

    pub fn to_sym(&self) -> SymMatrix {
        SymMatrix::from_diagonal(&self.d)
    }
}
