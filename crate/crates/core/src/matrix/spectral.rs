use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{MatrixError, SymMatrix};

/// Relative threshold for numerical rank: singular values above
/// `RANK_TOL * sigma_1` count.
pub const RANK_TOL: f64 = 1e-7;

/// Eigendecomposition `A = U diag(lambda) U^T` of a symmetric matrix.
///
/// Eigenvalues are sorted nonincreasing (stable with respect to the
/// underlying QR ordering). Each eigenvector is signed so that its first
/// non-negligible component is positive, which makes the decomposition
/// reproducible across runs.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SymEig {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.n() - 1]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Indices ordered by nonincreasing `|lambda_i|`, ties kept in eigenvalue order.
    pub fn magnitude_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.sort_by(|&a, &b| {
            self.eigenvalues[b]
                .abs()
                .total_cmp(&self.eigenvalues[a].abs())
        });
        idx
    }

    /// Singular values (absolute eigenvalues), nonincreasing.
    pub fn singular_values(&self) -> Vec<f64> {
        self.magnitude_order()
            .into_iter()
            .map(|i| self.eigenvalues[i].abs())
            .collect()
    }

    /// Sum of the `r` largest-magnitude eigen-terms `lambda_i u_i u_i^T`.
    pub fn truncate(&self, r: usize) -> SymMatrix {
        let keep: Vec<usize> = self.magnitude_order().into_iter().take(r).collect();
        let n = self.n();
        let mut u = DMatrix::zeros(n, keep.len());
        let mut w = Vec::with_capacity(keep.len());
        for (k, &i) in keep.iter().enumerate() {
            u.set_column(k, &self.eigenvectors.column(i));
            w.push(self.eigenvalues[i]);
        }
        SymMatrix::congruence(&u, &w)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::congruence(&self.eigenvectors, self.eigenvalues.as_slice())
    }
}

/// Symmetric eigendecomposition with the default iteration cap.
pub fn eig_sym(a: &SymMatrix) -> Result<SymEig, MatrixError> {
    eig_sym_with(a, 1000 * a.n().max(4))
}

pub fn eig_sym_with(a: &SymMatrix, max_iters: usize) -> Result<SymEig, MatrixError> {
    let n = a.n();
    let raw =
        SymmetricEigen::try_new(a.matrix().clone(), f64::EPSILON, max_iters).ok_or_else(|| {
            MatrixError::NoConvergence {
                iterations: max_iters,
                residual: off_diag(a).frobenius_norm(),
            }
        })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| raw.eigenvalues[j].total_cmp(&raw.eigenvalues[i]));

    let mut eigenvalues = DVector::zeros(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        eigenvalues[k] = raw.eigenvalues[i];
        let mut col = raw.eigenvectors.column(i).into_owned();
        let scale = col.amax();
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        eigenvectors.set_column(k, &col);
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

fn check_rank(r: usize, n: usize) -> Result<(), MatrixError> {
    if r == 0 || r > n {
        return Err(MatrixError::RankOutOfRange { r, n });
    }
    Ok(())
}

pub fn singular_values(a: &SymMatrix) -> Result<Vec<f64>, MatrixError> {
    Ok(eig_sym(a)?.singular_values())
}

/// A member of `svd_r(A)`: the best rank-`r` Frobenius approximation.
///
/// When `sigma_r == sigma_{r+1}` the set has more than one element; the
/// one returned is fixed by the deterministic ordering of [`eig_sym`].
pub fn svd_truncate(a: &SymMatrix, r: usize) -> Result<SymMatrix, MatrixError> {
    check_rank(r, a.n())?;
    Ok(eig_sym(a)?.truncate(r))
}

/// `||A||_r = sqrt(sum_{i<=r} sigma_i^2)`.
pub fn r_norm(a: &SymMatrix, r: usize) -> Result<f64, MatrixError> {
    check_rank(r, a.n())?;
    let s = singular_values(a)?;
    Ok(s[..r].iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Ky Fan `r`-norm: sum of the `r` largest singular values.
pub fn ky_fan_norm(a: &SymMatrix, r: usize) -> Result<f64, MatrixError> {
    check_rank(r, a.n())?;
    let s = singular_values(a)?;
    Ok(s[..r].iter().sum())
}

pub fn spectral_norm(a: &SymMatrix) -> Result<f64, MatrixError> {
    Ok(singular_values(a)?[0])
}

/// `lambda_min(A) >= -tol * max(1, ||A||_F)`.
pub fn is_psd(a: &SymMatrix, tol: f64) -> Result<bool, MatrixError> {
    let lmin = eig_sym(a)?.min_eigenvalue();
    Ok(lmin >= -tol * a.frobenius_norm().max(1.0))
}

/// `X - diag(X)`.
pub fn off_diag(x: &SymMatrix) -> SymMatrix {
    let mut m = x.matrix().clone();
    m.fill_diagonal(0.0);
    SymMatrix::new(m).expect("square by construction")
}

pub fn numerical_rank(a: &SymMatrix) -> Result<usize, MatrixError> {
    numerical_rank_with(a, RANK_TOL)
}

/// Number of singular values strictly above `rel_tol * sigma_1`.
pub fn numerical_rank_with(a: &SymMatrix, rel_tol: f64) -> Result<usize, MatrixError> {
    let s = singular_values(a)?;
    Ok(rank_of_values(&s, rel_tol))
}

/// Number of singular values strictly above `RANK_TOL * scale`, for a
/// matrix derived from a reference of spectral norm `scale` (a residual
/// `Σ - Δ` read against `σ_1(Σ)`, say).
pub fn numerical_rank_against(a: &SymMatrix, scale: f64) -> Result<usize, MatrixError> {
    let s = singular_values(a)?;
    Ok(s.iter().filter(|&&x| x > RANK_TOL * scale).count())
}

pub(crate) fn rank_of_values(sorted_desc: &[f64], rel_tol: f64) -> usize {
    let top = sorted_desc.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    sorted_desc.iter().filter(|&&s| s > rel_tol * top).count()
}
