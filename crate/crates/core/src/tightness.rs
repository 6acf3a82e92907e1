//! Certified neighbourhoods in which the convex dual is tight.
//!
//! For a low-rank PSD `Ω̂` with kernel isometry `V`, the linear map
//! `E: X -> diag(V X V^T)` from symmetric `(n-r)×(n-r)` matrices to diagonal
//! matrices decides which diagonal perturbations can be absorbed in the
//! kernel. When `E` is onto, every nonnegative diagonal `Δ` with
//! `||Δ||_F < σ_min(E) σ_r(Ω̂)` is certified: `Σ = Ω̂ + Δ` is decomposed
//! exactly by the rank-`r` dual.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector, SVD};
use rand::{Rng, SeedableRng};
use serde_json::json;

use crate::matrix::{eig_sym, spectral_norm, DiagMatrix, MatrixError, SymMatrix};
use crate::report::KeyValues;

/// Eigenvalues at most this fraction of `σ_1` belong to the kernel.
pub const KERNEL_TOL: f64 = 1e-8;
/// Relative threshold on singular values of `E` for surjectivity.
pub const SURJECTIVE_TOL: f64 = 1e-7;
/// Relative PSD tolerance for the input.
pub const PSD_TOL: f64 = 1e-6;
/// Orthogonality residual allowed by [`certificate_check`], relative to
/// `σ_1(Ω̂) ||Δ + Λ||_F`.
pub const RANGE_TOL: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum TightnessError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("extraction operator is not surjective")]
    NotSurjective,
    #[error("matrix has full rank; the kernel is empty")]
    FullRank,
    #[error("matrix is zero; there is no positive singular value to certify against")]
    Zero,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Orthonormal kernel basis of a PSD matrix and its numerical rank.
///
/// Columns are the eigenvectors of the `n - r` smallest eigenvalues, in the
/// order and sign convention of [`eig_sym`].
pub fn kernel_isometry(omega_hat: &SymMatrix) -> Result<(DMatrix<f64>, usize), TightnessError> {
    let n = omega_hat.n();
    let eig = eig_sym(omega_hat)?;
    let min_eig = eig.min_eigenvalue();
    if min_eig < -PSD_TOL * omega_hat.frobenius_norm().max(1.0) {
        return Err(TightnessError::NotPsd { min_eig });
    }
    let s1 = eig.max_eigenvalue().max(0.0);
    let r = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > KERNEL_TOL * s1 && l > 0.0)
        .count();
    let v = eig.eigenvectors.columns(r, n - r).into_owned();
    Ok((v, r))
}

/// Number of coordinates of a symmetric `k×k` matrix.
pub fn sym_dim(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Coordinates `(diagonal, then off-diagonal pairs (i < j) row-major)` of
/// the orthonormal basis of symmetric `k×k` matrices, as `(i, j)` pairs.
pub fn sym_basis(k: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..k).map(|i| (i, i)).collect();
    for i in 0..k {
        for j in (i + 1)..k {
            out.push((i, j));
        }
    }
    out
}

/// Symmetric matrix from orthonormal-basis coordinates.
pub fn sym_from_coords(k: usize, coords: &[f64]) -> DMatrix<f64> {
    assert_eq!(coords.len(), sym_dim(k));
    let mut x = DMatrix::zeros(k, k);
    for (&(i, j), &c) in sym_basis(k).iter().zip(coords) {
        if i == j {
            x[(i, i)] = c;
        } else {
            x[(i, j)] = c / SQRT_2;
            x[(j, i)] = c / SQRT_2;
        }
    }
    x
}

/// Matrix of `X -> diag(V X V^T)` in the orthonormal symmetric basis.
pub fn extraction_operator(v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.nrows();
    let k = v.ncols();
    let basis = sym_basis(k);
    let mut e = DMatrix::zeros(n, basis.len());
    for (col, &(i, j)) in basis.iter().enumerate() {
        for row in 0..n {
            e[(row, col)] = if i == j {
                v[(row, i)] * v[(row, i)]
            } else {
                SQRT_2 * v[(row, i)] * v[(row, j)]
            };
        }
    }
    e
}

/// Surjectivity of `E` and the certified lower bound `1 / ||E^+||`.
///
/// For onto `E`, `||E^+(Δ)||_spectral <= ||E^+(Δ)||_F <= ||Δ||_F / σ_min(E)`,
/// so `σ_min(E)` bounds the tightness constant from below. Otherwise 0.
pub fn phi_lower_bound(e: &DMatrix<f64>) -> Result<(bool, f64), TightnessError> {
    let n = e.nrows();
    if n == 0 {
        return Ok((true, 0.0));
    }
    if e.ncols() < n {
        return Ok((false, 0.0));
    }
    let sv = singular_values(e)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv[n - 1];
    if smax == 0.0 || smin <= SURJECTIVE_TOL * smax {
        return Ok((false, 0.0));
    }
    Ok((true, smin))
}

fn singular_values(e: &DMatrix<f64>) -> Result<Vec<f64>, TightnessError> {
    let max_iters = 1000 * e.nrows().max(e.ncols()).max(4);
    let svd = SVD::try_new(e.clone(), false, false, f64::EPSILON, max_iters).ok_or(
        MatrixError::NoConvergence {
            iterations: max_iters,
            residual: f64::NAN,
        },
    )?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

#[derive(Clone, Debug)]
pub struct TightnessReport {
    pub omega_hat: SymMatrix,
    pub r: usize,
    /// `σ_r(Ω̂)`; 0 when `r = 0`.
    pub sigma_r: f64,
    pub sigma_1: f64,
    pub v: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub surjective: bool,
    pub phi_lb: f64,
    /// `phi_lb · σ_r`; `None` when the kernel is empty or `Ω̂ = 0`.
    pub certified_radius: Option<f64>,
}

impl TightnessReport {
    pub fn analyze(omega_hat: &SymMatrix) -> Result<Self, TightnessError> {
        let (v, r) = kernel_isometry(omega_hat)?;
        let eig = eig_sym(omega_hat)?;
        let sigma_1 = eig.max_eigenvalue().max(0.0);
        let sigma_r = if r == 0 { 0.0 } else { eig.eigenvalues[r - 1] };
        let e = extraction_operator(&v);
        let (surjective, phi_lb) = phi_lower_bound(&e)?;
        let n = omega_hat.n();
        let certified_radius = (r > 0 && r < n).then_some(phi_lb * sigma_r);
        Ok(TightnessReport {
            omega_hat: omega_hat.clone(),
            r,
            sigma_r,
            sigma_1,
            v,
            e,
            surjective,
            phi_lb,
            certified_radius,
        })
    }

    pub fn n(&self) -> usize {
        self.omega_hat.n()
    }

    /// `||E^+||`, infinite when `E` is not onto.
    pub fn e_pinv_norm(&self) -> f64 {
        if self.phi_lb > 0.0 {
            1.0 / self.phi_lb
        } else {
            f64::INFINITY
        }
    }

    /// Orthogonal projector onto the kernel, independent of the basis.
    pub fn kernel_projector(&self) -> DMatrix<f64> {
        &self.v * self.v.transpose()
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push("n", self.n())
            .push("r", self.r)
            .push_real("sigma_r", self.sigma_r)
            .push("kernel_dim", self.v.ncols())
            .push("surjective", self.surjective)
            .push_real("phi_lb", self.phi_lb);
        match self.certified_radius {
            Some(c) => kv.push_real("certified_radius", c),
            None => kv.push("certified_radius", "NA"),
        };
        kv
    }

    pub fn to_json(&self) -> String {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        let doc = json!({
            "n": self.n(),
            "r": self.r,
            "sigma_r": self.sigma_r,
            "surjective": self.surjective,
            "phi_lb": self.phi_lb,
            "certified_radius": self.certified_radius,
            "v": rows(&self.v),
            "e": rows(&self.e),
        });
        serde_json::to_string_pretty(&doc).expect("serializable")
    }
}

/// Dual certificate `Λ` for a diagonal perturbation `Δ`.
#[derive(Clone, Debug)]
pub struct Certificate {
    /// Zero diagonal, exactly.
    pub lambda: SymMatrix,
    pub delta: DiagMatrix,
    /// `||Δ + Λ||` (spectral).
    pub norm_check: f64,
    /// `||Ω̂ (Δ + Λ)||_F`.
    pub range_check: f64,
    /// Largest diagonal entry discarded when zeroing the diagonal of `Λ`.
    pub diag_residual: f64,
}

/// `Λ = V mat(E^+ d) V^T - Δ`, so that `Δ + Λ` lives in the kernel of `Ω̂`.
pub fn construct_lambda(
    report: &TightnessReport,
    delta: &DiagMatrix,
) -> Result<Certificate, TightnessError> {
    let n = report.n();
    if delta.n() != n {
        return Err(TightnessError::Dimension {
            expected: n,
            got: delta.n(),
        });
    }
    if !report.surjective || report.v.ncols() == 0 {
        return Err(TightnessError::NotSurjective);
    }
    let k = report.v.ncols();
    let d = DVector::from_column_slice(delta.values());
    let pinv = SVD::new(report.e.clone(), true, true)
        .pseudo_inverse(SURJECTIVE_TOL * report.phi_lb.max(f64::MIN_POSITIVE))
        .map_err(|_| TightnessError::NotSurjective)?;
    let coords = pinv * d;
    let x = sym_from_coords(k, coords.as_slice());
    let mut m = &report.v * x * report.v.transpose();
    m = (&m + m.transpose()) * 0.5;
    let mut diag_residual = 0.0f64;
    for i in 0..n {
        diag_residual = diag_residual.max((m[(i, i)] - delta.values()[i]).abs());
        m[(i, i)] = delta.values()[i];
    }
    // Λ = M - Δ with the diagonal exactly zero
    let mut lambda = m;
    for i in 0..n {
        lambda[(i, i)] = 0.0;
    }
    let lambda = SymMatrix::new(lambda)?;
    Ok(certificate_from(
        &report.omega_hat,
        lambda,
        delta.clone(),
        diag_residual,
    )?)
}

fn certificate_from(
    omega_hat: &SymMatrix,
    lambda: SymMatrix,
    delta: DiagMatrix,
    diag_residual: f64,
) -> Result<Certificate, MatrixError> {
    let sum = &lambda + &delta.to_sym();
    Ok(Certificate {
        norm_check: spectral_norm(&sum)?,
        range_check: (omega_hat.matrix() * sum.matrix()).norm(),
        lambda,
        delta,
        diag_residual,
    })
}

/// Certificate from an explicit `Λ`; the diagonal of `Λ` is zeroed.
pub fn certificate_for(
    omega_hat: &SymMatrix,
    lambda: &SymMatrix,
    delta: &DiagMatrix,
) -> Result<Certificate, TightnessError> {
    let n = omega_hat.n();
    for got in [lambda.n(), delta.n()] {
        if got != n {
            return Err(TightnessError::Dimension { expected: n, got });
        }
    }
    let mut l = lambda.matrix().clone();
    let diag_residual = (0..n).fold(0.0f64, |a, i| a.max(l[(i, i)].abs()));
    for i in 0..n {
        l[(i, i)] = 0.0;
    }
    Ok(certificate_from(
        omega_hat,
        SymMatrix::new(l)?,
        delta.clone(),
        diag_residual,
    )?)
}

/// `||Δ + Λ|| < σ_r(Ω̂)` and `Ω̂ (Δ + Λ) ≈ 0`. Both quantities are
/// recomputed from `Λ` and `Δ`, not read from the certificate.
pub fn certificate_check(
    omega_hat: &SymMatrix,
    cert: &Certificate,
) -> Result<bool, TightnessError> {
    let n = omega_hat.n();
    if cert.lambda.n() != n || cert.delta.n() != n {
        return Err(TightnessError::Dimension {
            expected: n,
            got: cert.lambda.n(),
        });
    }
    let (_, r) = kernel_isometry(omega_hat)?;
    if r == 0 {
        return Ok(false);
    }
    let eig = eig_sym(omega_hat)?;
    let sigma_r = eig.eigenvalues[r - 1];
    let sigma_1 = eig.max_eigenvalue();
    let sum = &cert.lambda + &cert.delta.to_sym();
    let norm = spectral_norm(&sum)?;
    let range = (omega_hat.matrix() * sum.matrix()).norm();
    Ok(norm < sigma_r && range <= RANGE_TOL * sigma_1 * sum.frobenius_norm())
}

/// `||Δ||_F` strictly inside the certified radius. The zero perturbation
/// always qualifies; negative entries never do.
pub fn membership_d_tilde(report: &TightnessReport, delta: &DiagMatrix) -> bool {
    if !delta.is_nonneg() {
        return false;
    }
    if delta.is_zero() {
        return true;
    }
    match report.certified_radius {
        Some(radius) => delta.frobenius_norm() < radius,
        None => false,
    }
}

#[derive(Clone, Debug)]
pub struct Witness {
    /// Kernel vector with `||v||^2 < σ_r(Ω̂)`.
    pub v: DVector<f64>,
    pub delta: DiagMatrix,
    pub sigma: SymMatrix,
    pub certificate: Certificate,
    pub certified: bool,
    /// `Σ = Ω̂ + Δ` is positive definite.
    pub sigma_pd: bool,
}

/// Fraction of `σ_r(Ω̂)` used for `||v||^2` by [`nonempty_witness`].
pub const WITNESS_FRACTION: f64 = 0.25;

/// Perturbation `Δ = diag(v v^T)` with `v` in the kernel of `Ω̂`, certified
/// by `Λ = v v^T - Δ`. Among a fixed sequence of kernel directions the one
/// with the largest smallest entry is taken, so that `Δ > 0` and `Σ` is
/// positive definite whenever such a direction was found.
pub fn nonempty_witness(omega_hat: &SymMatrix) -> Result<Witness, TightnessError> {
    nonempty_witness_scaled(omega_hat, WITNESS_FRACTION)
}

/// As [`nonempty_witness`] with `||v||^2 = fraction · σ_r(Ω̂)`; `fraction`
/// must lie in `(0, 1)` for the certificate to hold.
pub fn nonempty_witness_scaled(
    omega_hat: &SymMatrix,
    fraction: f64,
) -> Result<Witness, TightnessError> {
    let (v_basis, r) = kernel_isometry(omega_hat)?;
    let n = omega_hat.n();
    if r == n {
        return Err(TightnessError::FullRank);
    }
    if r == 0 {
        return Err(TightnessError::Zero);
    }
    let sigma_r = eig_sym(omega_hat)?.eigenvalues[r - 1];
    let k = v_basis.ncols();

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for attempt in 0..200 {
        let w = if attempt == 0 {
            DVector::from_element(k, 1.0)
        } else {
            DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0))
        };
        let mut v = &v_basis * w;
        let norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        v /= norm;
        let score = v.iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, v));
        }
    }
    let (_, mut v) = best.expect("kernel is nonempty");
    v *= (fraction * sigma_r).sqrt();

    let d: Vec<f64> = v.iter().map(|x| x * x).collect();
    let delta = DiagMatrix::new(d);
    let vvt = SymMatrix::new(&v * v.transpose())?;
    let lambda = &vvt - &delta.to_sym();
    let certificate = certificate_for(omega_hat, &lambda, &delta)?;
    let certified = certificate_check(omega_hat, &certificate)?;
    let sigma = omega_hat + &delta.to_sym();
    let min_eig = eig_sym(&sigma)?.min_eigenvalue();
    let sigma_pd = min_eig > PSD_TOL * sigma.frobenius_norm().max(1.0);
    Ok(Witness {
        v,
        delta,
        sigma,
        certificate,
        certified,
        sigma_pd,
    })
}
