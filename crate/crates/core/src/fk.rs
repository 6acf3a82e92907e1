//! Frisch-Kalman rank search through a convex dual.
//!
//! For a target rank `r` the reformulated problem
//!
//! ```text
//! min ||Σ - Ω||_F^2   s.t.  rank(Ω) <= r,  Σ >= Ω >= 0,  Σ - Ω diagonal
//! ```
//!
//! is bounded below by the concave dual
//!
//! ```text
//! max_Λ  -||Σ + Λ||_r^2 + 2<Λ, Σ> + ||Σ||_F^2,   Λ symmetric with zero diagonal,
//! ```
//!
//! which is solved as an SDP. A primal candidate is read off as the best
//! rank-`r` approximation of `Σ + Λ*` and then checked for feasibility;
//! the rank search walks `r` upward until a candidate passes.

use serde::{Deserialize, Serialize};

use crate::conic::{
    AdmmSolver, Cone, ConicError, ConicSolver, ProblemBuilder, SdpProblem, SolveStatus,
    SolverConfig,
};
use crate::matrix::{
    eig_sym, numerical_rank, r_norm, svd_truncate, DiagMatrix, MatrixError, SymMatrix,
};
use crate::report::{self, KeyValues};

/// Relative PSD tolerance used by the feasibility checks.
pub const PSD_TOL: f64 = 1e-6;
/// Off-diagonal tolerance, relative to `||Σ||_F`.
pub const OFFDIAG_TOL: f64 = 1e-5;
/// Relative slack within which `Λ = 0` is preferred as the dual maximizer.
pub const ZERO_TIE_TOL: f64 = 1e-12;
/// Largest diagonal entry accepted in a dual matrix passed to [`recover_primal`].
pub const LAMBDA_DIAG_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum FkError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("rank {r} out of range {lo}..={hi}")]
    RankOutOfRange { r: usize, lo: usize, hi: usize },
    #[error("covariance is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("dual matrix has nonzero diagonal entry {value:e}")]
    LambdaDiagonal { value: f64 },
    #[error("candidate is infeasible for the rank-constrained problem: {0}")]
    Infeasible(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Nonnegative diagonal noise: `Σ >= Ω >= 0`.
    FrischKalman,
    /// Signed diagonal noise: only `Ω >= 0` is required.
    Shapiro,
}

#[derive(Clone, Debug)]
pub struct FkInstance {
    sigma: SymMatrix,
    variant: Variant,
}

impl FkInstance {
    /// The Frisch-Kalman variant requires `Σ` positive definite.
    pub fn new(sigma: SymMatrix, variant: Variant) -> Result<Self, FkError> {
        if variant == Variant::FrischKalman {
            let min_eig = eig_sym(&sigma)?.min_eigenvalue();
            if min_eig <= PSD_TOL * sigma.frobenius_norm().max(1.0) {
                return Err(FkError::NotPositiveDefinite { min_eig });
            }
        }
        Ok(FkInstance { sigma, variant })
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.sigma.n()
    }
}

/// Variable layout of the dual SDP.
///
/// `x = [λ_ij (i < j, row-major) | γ | T (svec order, unscaled entries)]`.
#[derive(Clone, Debug)]
pub struct DualSdp {
    pub problem: SdpProblem,
    n: usize,
    r: usize,
}

impl DualSdp {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn lambda_var(n: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        debug_assert!(i < j && j < n);
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    fn num_lambda(n: usize) -> usize {
        n * (n - 1) / 2
    }

    pub fn gamma_var(&self) -> usize {
        Self::num_lambda(self.n)
    }

    pub fn t_var(&self, i: usize, j: usize) -> usize {
        Self::num_lambda(self.n) + 1 + crate::conic::svec_index(self.n, i, j)
    }

    /// Reassembles `Λ` from a solution vector; the diagonal is exactly zero.
    pub fn lambda(&self, x: &[f64]) -> SymMatrix {
        let n = self.n;
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = x[Self::lambda_var(n, i, j)];
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix::new(m).expect("square")
    }

    /// Optimal value of the maximization, from the minimization objective.
    pub fn dual_objective(&self, primal_objective: f64) -> f64 {
        -primal_objective
    }
}

/// Builds the SDP
///
/// ```text
/// max  -tr(T) + γ (n - r) + 2<Λ, Σ> + ||Σ||_F^2
/// s.t. Λ zero-diagonal,  T - γ I >= 0,  [[T, Σ+Λ], [Σ+Λ, I]] >= 0
/// ```
///
/// whose value is `max_Λ -||Σ+Λ||_r^2 + 2<Λ,Σ> + ||Σ||_F^2`. The inner
/// minimum of `tr(T) - γ (n - r)` over the two PSD constraints equals
/// `||Σ+Λ||_r^2` (sum of the `r` largest eigenvalues of `(Σ+Λ)^2`).
pub fn build_dual_sdp(sigma: &SymMatrix, r: usize) -> Result<DualSdp, FkError> {
    let n = sigma.n();
    if r == 0 || r > n {
        return Err(FkError::RankOutOfRange { r, lo: 1, hi: n });
    }
    let nl = DualSdp::num_lambda(n);
    let nt = n * (n + 1) / 2;
    let layout = DualSdp {
        problem: ProblemBuilder::new(0).build(),
        n,
        r,
    };
    let gamma = layout.gamma_var();
    let mut b = ProblemBuilder::new(nl + 1 + nt);

    // minimize tr(T) - γ (n - r) - 2<Λ,Σ> - ||Σ||_F^2
    for i in 0..n {
        b.cost(layout.t_var(i, i), 1.0);
        for j in (i + 1)..n {
            b.cost(DualSdp::lambda_var(n, i, j), -4.0 * sigma.get(i, j));
        }
    }
    b.cost(gamma, -((n - r) as f64));
    b.offset(-sigma.frobenius_norm().powi(2));

    let shifted = b.block(Cone::Psd(n));
    for j in 0..n {
        for i in j..n {
            b.matrix_term(shifted, i, j, layout.t_var(i, j), 1.0);
        }
        b.matrix_term(shifted, j, j, gamma, -1.0);
    }

    let schur = b.block(Cone::Psd(2 * n));
    for j in 0..n {
        for i in j..n {
            b.matrix_term(schur, i, j, layout.t_var(i, j), 1.0);
        }
        b.matrix_constant(schur, n + j, n + j, 1.0);
    }
    for i in 0..n {
        for j in 0..n {
            b.matrix_constant(schur, n + i, j, sigma.get(i, j));
            if i != j {
                b.matrix_term(schur, n + i, j, DualSdp::lambda_var(n, i, j), 1.0);
            }
        }
    }

    Ok(DualSdp {
        problem: b.build(),
        ..layout
    })
}

/// `-||Σ + Λ||_r^2 + 2<Λ, Σ> + ||Σ||_F^2`, a lower bound on the
/// rank-constrained problem for every zero-diagonal `Λ`.
pub fn dual_function(sigma: &SymMatrix, lambda: &SymMatrix, r: usize) -> Result<f64, FkError> {
    let shifted = sigma + lambda;
    let rn = r_norm(&shifted, r)?;
    Ok(-rn * rn + 2.0 * lambda.inner(sigma) + sigma.frobenius_norm().powi(2))
}

/// Maximizer of the dual at a fixed rank.
#[derive(Clone, Debug)]
pub struct DualSolution {
    pub lambda: SymMatrix,
    /// `dual_function(Σ, Λ*, r)`, evaluated directly rather than read off
    /// the SDP objective, so it is a valid lower bound for any `Λ*`.
    pub value: f64,
    /// Maximizer returned by the conic solver. Differs from `lambda` only
    /// when `Λ = 0` was preferred as an equally good maximizer.
    pub solver_lambda: SymMatrix,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves the dual SDP at rank `r`.
///
/// The dual is homogeneous of degree two in `(Σ, Λ)`, so the SDP is built
/// for `Σ / ||Σ||_F` and `Λ*` scaled back; this keeps the conic iterates
/// of order one whatever the magnitude of `Σ`.
///
/// The maximizer need not be unique: when `Σ` has rank `r`, every
/// zero-diagonal `Λ` supported on the kernel with `||Λ|| < σ_r(Σ)` is
/// optimal along with `Λ = 0`. Ties are broken towards `Λ = 0` whenever
/// `f(0)` is within `ZERO_TIE_TOL (1 + ||Σ||_F^2)` of `f(Λ*)`. For such `Σ`
/// `f(0)` is the maximum, so the slack only absorbs round-off.
pub fn solve_dual(
    sigma: &SymMatrix,
    r: usize,
    solver: &dyn ConicSolver,
) -> Result<DualSolution, FkError> {
    let scale = sigma.frobenius_norm();
    if scale == 0.0 {
        build_dual_sdp(sigma, r)?;
        return Ok(DualSolution {
            lambda: SymMatrix::zeros(sigma.n()),
            solver_lambda: SymMatrix::zeros(sigma.n()),
            value: 0.0,
            status: SolveStatus::Optimal,
            iterations: 0,
            residual: 0.0,
        });
    }
    let sdp = build_dual_sdp(&sigma.scale(1.0 / scale), r)?;
    let sol = solver.solve(&sdp.problem)?;
    let solver_lambda = sdp.lambda(&sol.x).scale(scale);
    let value = dual_function(sigma, &solver_lambda, r)?;
    let zero = SymMatrix::zeros(sigma.n());
    let zero_value = dual_function(sigma, &zero, r)?;
    let (lambda, value) = if zero_value >= value - ZERO_TIE_TOL * (1.0 + scale * scale) {
        (zero, zero_value)
    } else {
        (solver_lambda.clone(), value)
    };
    Ok(DualSolution {
        value,
        lambda,
        solver_lambda,
        status: sol.status,
        iterations: sol.iterations,
        residual: sol.max_residual(),
    })
}

/// Best rank-`r` approximation of `Σ + Λ*`.
pub fn recover_primal(
    sigma: &SymMatrix,
    lambda_star: &SymMatrix,
    r: usize,
) -> Result<SymMatrix, FkError> {
    if lambda_star.n() != sigma.n() {
        return Err(FkError::Dimension {
            expected: sigma.n(),
            got: lambda_star.n(),
        });
    }
    if let Some(&value) = lambda_star
        .diagonal()
        .iter()
        .find(|d| d.abs() > LAMBDA_DIAG_TOL)
    {
        return Err(FkError::LambdaDiagonal { value });
    }
    Ok(svd_truncate(&(sigma + lambda_star), r)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityTolerance {
    /// Relative: `λ_min >= -psd * max(1, ||·||_F)`.
    pub psd: f64,
    /// Absolute bound on off-diagonal entries of `Σ - Ω`.
    pub offdiag: f64,
}

impl FeasibilityTolerance {
    pub fn for_sigma(sigma: &SymMatrix) -> Self {
        FeasibilityTolerance {
            psd: PSD_TOL,
            offdiag: OFFDIAG_TOL * sigma.frobenius_norm(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub omega_psd: bool,
    /// `Σ - Ω >= 0`; not checked for the Shapiro variant.
    pub residual_psd: Option<bool>,
    pub offdiag_ok: bool,
    pub omega_min_eig: f64,
    pub residual_min_eig: f64,
    pub max_offdiag: f64,
}

impl FeasibilityVerdict {
    pub fn feasible(&self) -> bool {
        self.omega_psd && self.residual_psd.unwrap_or(true) && self.offdiag_ok
    }
}

pub fn check_feasibility(
    sigma: &SymMatrix,
    omega: &SymMatrix,
    variant: Variant,
    tol: &FeasibilityTolerance,
) -> Result<FeasibilityVerdict, FkError> {
    if sigma.n() != omega.n() {
        return Err(FkError::Dimension {
            expected: sigma.n(),
            got: omega.n(),
        });
    }
    let residual = sigma - omega;
    let omega_min_eig = eig_sym(omega)?.min_eigenvalue();
    let residual_min_eig = eig_sym(&residual)?.min_eigenvalue();
    let max_offdiag = residual.max_abs_offdiag();
    let omega_psd = omega_min_eig >= -tol.psd * omega.frobenius_norm().max(1.0);
    let residual_psd = match variant {
        Variant::FrischKalman => {
            Some(residual_min_eig >= -tol.psd * residual.frobenius_norm().max(1.0))
        }
        Variant::Shapiro => None,
    };
    Ok(FeasibilityVerdict {
        omega_psd,
        residual_psd,
        offdiag_ok: max_offdiag <= tol.offdiag,
        omega_min_eig,
        residual_min_eig,
        max_offdiag,
    })
}

/// `||Σ - Ω*||_F^2 - dual(Λ*)`. Nonnegative up to solver accuracy.
pub fn duality_gap(
    instance: &FkInstance,
    r: usize,
    lambda_star: &SymMatrix,
    omega_star: &SymMatrix,
) -> Result<f64, FkError> {
    let sigma = instance.sigma();
    let verdict = check_feasibility(
        sigma,
        omega_star,
        instance.variant(),
        &FeasibilityTolerance::for_sigma(sigma),
    )?;
    if !verdict.feasible() {
        return Err(FkError::Infeasible(format!("{verdict:?}")));
    }
    let primal = (sigma - omega_star).frobenius_norm().powi(2);
    Ok(primal - dual_function(sigma, lambda_star, r)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FkConfig {
    pub solver: SolverConfig,
    pub psd_tol: f64,
    /// Off-diagonal tolerance relative to `||Σ||_F`.
    pub offdiag_tol: f64,
    /// Return rank 0 immediately when `Σ` is already diagonal.
    pub zero_rank_precheck: bool,
}

impl Default for FkConfig {
    fn default() -> Self {
        FkConfig {
            solver: SolverConfig::default(),
            psd_tol: PSD_TOL,
            offdiag_tol: OFFDIAG_TOL,
            zero_rank_precheck: true,
        }
    }
}

impl FkConfig {
    fn tolerance(&self, sigma: &SymMatrix) -> FeasibilityTolerance {
        FeasibilityTolerance {
            psd: self.psd_tol,
            offdiag: self.offdiag_tol * sigma.frobenius_norm(),
        }
    }
}

/// One step of the rank search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankAttempt {
    pub r: usize,
    pub lambda: SymMatrix,
    pub status: SolveStatus,
    pub sdp_iterations: usize,
    pub sdp_residual: f64,
    /// `dual_function(Σ, Λ*, r)`.
    pub dual_value: f64,
    /// `||Σ - Ω||_F^2` for the recovered candidate, feasible or not.
    pub primal_value: f64,
    pub verdict: FeasibilityVerdict,
    pub accepted: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FkResult {
    pub variant: Variant,
    pub r_star: usize,
    pub omega_star: SymMatrix,
    pub delta_star: DiagMatrix,
    /// Dual lower bound at the accepted rank.
    pub dual_value: Option<f64>,
    /// `||Σ - Ω*||_F^2`.
    pub primal_value: f64,
    pub duality_gap: Option<f64>,
    pub per_rank: Vec<RankAttempt>,
    pub fallback_used: bool,
}

impl FkResult {
    pub fn accepted(&self) -> Option<&RankAttempt> {
        self.per_rank.iter().find(|a| a.accepted)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push("variant", self.variant)
            .push("r_star", self.r_star)
            .push("fallback_used", self.fallback_used)
            .push_real("primal_value", self.primal_value);
        match self.dual_value {
            Some(v) => kv.push_real("dual_value", v),
            None => kv.push("dual_value", "NA"),
        };
        match self.duality_gap {
            Some(v) => kv.push_real("duality_gap", v),
            None => kv.push("duality_gap", "NA"),
        };
        kv.push("delta_star", report::reals(self.delta_star.values()));
        for a in &self.per_rank {
            let p = format!("rank.{}", a.r);
            kv.push(format!("{p}.status"), a.status)
                .push(format!("{p}.accepted"), a.accepted)
                .push(format!("{p}.feasible"), a.verdict.feasible())
                .push_real(format!("{p}.dual_value"), a.dual_value)
                .push_real(format!("{p}.primal_value"), a.primal_value)
                .push_real(format!("{p}.omega_min_eig"), a.verdict.omega_min_eig)
                .push_real(format!("{p}.residual_min_eig"), a.verdict.residual_min_eig)
                .push_real(format!("{p}.max_offdiag"), a.verdict.max_offdiag)
                .push(format!("{p}.sdp_iterations"), a.sdp_iterations)
                .push_real(format!("{p}.sdp_residual"), a.sdp_residual);
        }
        kv
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::FrischKalman => "fk",
            Variant::Shapiro => "shapiro",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fk" | "frisch_kalman" => Ok(Variant::FrischKalman),
            "shapiro" => Ok(Variant::Shapiro),
            other => Err(format!(
                "unknown variant `{other}` (expected fk or shapiro)"
            )),
        }
    }
}

/// Rank search with the bundled ADMM engine.
pub fn solve(instance: &FkInstance, r_init: usize, cfg: &FkConfig) -> Result<FkResult, FkError> {
    solve_with(instance, r_init, cfg, &AdmmSolver::new(cfg.solver.clone()))
}

/// Rank search for `r = r_init, r_init + 1, ..., n - 1`.
///
/// Stops at the first rank whose recovered candidate passes the
/// feasibility check. A rank whose SDP does not reach the solver tolerance
/// counts as infeasible. If no rank succeeds the decomposition
/// `Δ = λ_min(Σ) I` is returned with `fallback_used = true`.
pub fn solve_with(
    instance: &FkInstance,
    r_init: usize,
    cfg: &FkConfig,
    solver: &dyn ConicSolver,
) -> Result<FkResult, FkError> {
    let sigma = instance.sigma();
    let n = sigma.n();
    let hi = n.saturating_sub(1).max(1);
    if r_init == 0 || r_init > hi {
        return Err(FkError::RankOutOfRange {
            r: r_init,
            lo: 1,
            hi,
        });
    }
    let tol = cfg.tolerance(sigma);

    if cfg.zero_rank_precheck && sigma.is_diagonal(tol.offdiag) {
        let delta = DiagMatrix::of(sigma);
        return Ok(FkResult {
            variant: instance.variant(),
            r_star: 0,
            omega_star: SymMatrix::zeros(n),
            primal_value: delta.frobenius_norm().powi(2),
            delta_star: delta,
            dual_value: None,
            duality_gap: None,
            per_rank: Vec::new(),
            fallback_used: false,
        });
    }

    let mut per_rank = Vec::new();
    for r in r_init..n {
        let mut dual = solve_dual(sigma, r, solver)?;
        let mut omega = recover_primal(sigma, &dual.lambda, r)?;
        let mut verdict = check_feasibility(sigma, &omega, instance.variant(), &tol)?;
        if !verdict.feasible() && dual.lambda != dual.solver_lambda {
            // The tie-break to Λ = 0 only holds up to tolerance; fall back to the solver's maximizer.
            omega = recover_primal(sigma, &dual.solver_lambda, r)?;
            verdict = check_feasibility(sigma, &omega, instance.variant(), &tol)?;
            dual.lambda = dual.solver_lambda.clone();
            dual.value = dual_function(sigma, &dual.lambda, r)?;
        }
        let primal_value = (sigma - &omega).frobenius_norm().powi(2);
        let accepted = dual.status == SolveStatus::Optimal && verdict.feasible();
        if dual.status != SolveStatus::Optimal {
            log::warn!(
                "rank {r}: conic solver stopped with {:?} after {} iterations (residual {:e})",
                dual.status,
                dual.iterations,
                dual.residual
            );
        }
        let dual_value = dual.value;
        per_rank.push(RankAttempt {
            r,
            lambda: dual.lambda,
            status: dual.status,
            sdp_iterations: dual.iterations,
            sdp_residual: dual.residual,
            dual_value,
            primal_value,
            verdict,
            accepted,
        });
        if accepted {
            let delta = DiagMatrix::new((sigma - &omega).diagonal());
            let gap = primal_value - dual_value;
            let slack = 1e-6 * (1.0 + sigma.frobenius_norm().powi(2));
            if gap < -slack {
                log::warn!("rank {r}: weak duality violated by {:e}", -gap);
            }
            return Ok(FkResult {
                variant: instance.variant(),
                r_star: numerical_rank(&omega)?,
                omega_star: omega,
                delta_star: delta,
                dual_value: Some(dual_value),
                primal_value,
                duality_gap: Some(gap),
                per_rank,
                fallback_used: false,
            });
        }
    }

    let lmin = eig_sym(sigma)?.min_eigenvalue();
    let delta = DiagMatrix::scaled_identity(n, lmin);
    let omega = sigma - &delta.to_sym();
    Ok(FkResult {
        variant: instance.variant(),
        r_star: numerical_rank(&omega)?,
        omega_star: omega,
        primal_value: delta.frobenius_norm().powi(2),
        delta_star: delta,
        dual_value: None,
        duality_gap: None,
        per_rank,
        fallback_used: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::Cone;
    use crate::conic::SolverConfig;

    fn case_study() -> SymMatrix {
        SymMatrix::outer(&[4.0, 2.0, 1.0])
    }

    #[test]
    fn lambda_layout_is_dense_and_ordered() {
        let n = 5;
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                assert_eq!(DualSdp::lambda_var(n, i, j), k);
                assert_eq!(DualSdp::lambda_var(n, j, i), k);
                k += 1;
            }
        }
    }

    #[test]
    fn dual_sdp_dimensions_for_two_by_two() {
        let sdp = build_dual_sdp(&SymMatrix::identity(2), 1).unwrap();
        let p = &sdp.problem;
        assert_eq!(p.cones, vec![Cone::Psd(2), Cone::Psd(4)]);
        // one Λ scalar, γ, three T entries
        assert_eq!(p.num_vars(), 1 + 1 + 3);
        assert_eq!(sdp.gamma_var(), 1);
    }

    #[test]
    fn rank_out_of_range() {
        assert!(matches!(
            build_dual_sdp(&SymMatrix::identity(3), 0),
            Err(FkError::RankOutOfRange { .. })
        ));
        assert!(matches!(
            build_dual_sdp(&SymMatrix::identity(3), 4),
            Err(FkError::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn recover_rejects_nonzero_diagonal() {
        let bad = SymMatrix::from_diagonal(&[1e-3, 0.0, 0.0]);
        assert!(matches!(
            recover_primal(&case_study(), &bad, 1),
            Err(FkError::LambdaDiagonal { .. })
        ));
    }

    #[test]
    fn recover_examples() {
        let z = SymMatrix::zeros(3);
        let o = recover_primal(&case_study(), &z, 1).unwrap();
        assert!((o.matrix() - case_study().matrix()).norm() < 1e-12);
        let d = recover_primal(&SymMatrix::from_diagonal(&[3.0, 2.0, 1.0]), &z, 2).unwrap();
        assert!((d.matrix() - SymMatrix::from_diagonal(&[3.0, 2.0, 0.0]).matrix()).norm() < 1e-14);
    }

    #[test]
    fn feasibility_examples() {
        let s = case_study();
        let tol = FeasibilityTolerance::for_sigma(&s);
        let v = check_feasibility(&s, &s, Variant::FrischKalman, &tol).unwrap();
        assert!(v.feasible());
        assert_eq!(v.max_offdiag, 0.0);

        let i2 = SymMatrix::identity(2);
        let omega = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let v = check_feasibility(
            &i2,
            &omega,
            Variant::FrischKalman,
            &FeasibilityTolerance::for_sigma(&i2),
        )
        .unwrap();
        assert!(!v.offdiag_ok);
        assert!(!v.feasible());
        assert!((v.max_offdiag - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shapiro_skips_residual_psd() {
        // Σ - Ω = diag(-1, 1) is diagonal but indefinite
        let sigma = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let omega = SymMatrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let tol = FeasibilityTolerance::for_sigma(&sigma);
        let fk = check_feasibility(&sigma, &omega, Variant::FrischKalman, &tol).unwrap();
        let sh = check_feasibility(&sigma, &omega, Variant::Shapiro, &tol).unwrap();
        assert!(!fk.feasible());
        assert!(sh.feasible());
        assert_eq!(sh.residual_psd, None);
    }

    #[test]
    fn instance_requires_positive_definite() {
        assert!(matches!(
            FkInstance::new(case_study(), Variant::FrischKalman),
            Err(FkError::NotPositiveDefinite { .. })
        ));
        assert!(FkInstance::new(case_study(), Variant::Shapiro).is_ok());
    }

    #[test]
    fn diagonal_sigma_short_circuits_to_rank_zero() {
        let inst = FkInstance::new(
            SymMatrix::from_diagonal(&[4.0, 5.0, 6.0]),
            Variant::FrischKalman,
        )
        .unwrap();
        let res = solve(&inst, 1, &FkConfig::default()).unwrap();
        assert_eq!(res.r_star, 0);
        assert!(res.per_rank.is_empty());
        assert_eq!(res.delta_star.values(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn r_init_range_checked() {
        let inst = FkInstance::new(
            &case_study() + &SymMatrix::identity(3),
            Variant::FrischKalman,
        )
        .unwrap();
        assert!(matches!(
            solve(&inst, 0, &FkConfig::default()),
            Err(FkError::RankOutOfRange { .. })
        ));
        assert!(matches!(
            solve(&inst, 3, &FkConfig::default()),
            Err(FkError::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn case_study_exact_rank_has_zero_dual() {
        let s = case_study();
        let d = solve_dual(&s, 1, &AdmmSolver::default()).unwrap();
        assert_eq!(d.status, SolveStatus::Optimal);
        assert!(d.value.abs() <= 1e-6 * (1.0 + 441.0), "{}", d.value);
        assert!(d.lambda.frobenius_norm() <= 1e-5 * 21.0);
        let o = recover_primal(&s, &d.lambda, 1).unwrap();
        assert!((o.matrix() - s.matrix()).norm() <= 1e-5 * 21.0);
    }

    #[test]
    fn case_study_with_noise_recovers_signal() {
        // ||Δ||_F = 2, inside the certified radius
        let delta = SymMatrix::from_diagonal(&[1.0, 1.0, 2f64.sqrt()]);
        let inst = FkInstance::new(&case_study() + &delta, Variant::FrischKalman).unwrap();
        let res = solve(&inst, 1, &FkConfig::default()).unwrap();
        assert_eq!(res.r_star, 1);
        assert!(!res.fallback_used);
        assert!((res.omega_star.matrix() - case_study().matrix()).norm() <= 1e-4 * 21.0);
        assert!((res.dual_value.unwrap() - 4.0).abs() <= 1e-5 * 4.0);
        assert!(res.duality_gap.unwrap() <= 1e-6);
        let kv = res.to_key_values();
        assert_eq!(kv.get("r_star"), Some("1"));
        assert_eq!(kv.get("rank.1.accepted"), Some("true"));
    }

    #[test]
    fn diagonal_sigma_without_precheck_gives_rank_one() {
        let sigma = SymMatrix::from_diagonal(&[4.0, 5.0, 6.0]);
        // oracle: Δ = diag(4, 5, 0) leaves 6 e3 e3^T, so the minimum rank is at most one
        let witness = &sigma - &SymMatrix::from_diagonal(&[4.0, 5.0, 0.0]);
        assert_eq!(numerical_rank(&witness).unwrap(), 1);

        let inst = FkInstance::new(sigma, Variant::FrischKalman).unwrap();
        let cfg = FkConfig {
            zero_rank_precheck: false,
            ..FkConfig::default()
        };
        let res = solve(&inst, 1, &cfg).unwrap();
        assert_eq!(res.r_star, 1);
        let target = SymMatrix::from_diagonal(&[0.0, 0.0, 6.0]);
        assert!((res.omega_star.matrix() - target.matrix()).norm() < 1e-6);
    }

    #[test]
    fn large_noise_rejects_rank_one() {
        // ||Δ||_F = 20, far outside the certified radius
        let d = [1.0, 2.0, 3.0];
        let f = 20.0 / d.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        let delta = SymMatrix::from_diagonal(&d.map(|x| x * f));
        let inst = FkInstance::new(&case_study() + &delta, Variant::FrischKalman).unwrap();
        let res = solve(&inst, 1, &FkConfig::default()).unwrap();
        assert!(res.r_star > 1 || res.fallback_used);
        assert!(!res.per_rank[0].accepted);
    }

    #[test]
    fn fallback_decomposition_is_valid() {
        // a solver that never converges forces the fallback
        let cfg = FkConfig {
            solver: SolverConfig {
                max_iters: 1,
                ..SolverConfig::default()
            },
            ..FkConfig::default()
        };
        let sigma = SymMatrix::from_rows(&[
            vec![2.0, 0.5, 0.3],
            vec![0.5, 1.5, 0.2],
            vec![0.3, 0.2, 1.0],
        ])
        .unwrap();
        let inst = FkInstance::new(sigma.clone(), Variant::FrischKalman).unwrap();
        let res = solve(&inst, 1, &cfg).unwrap();
        assert!(res.fallback_used);
        assert_eq!(res.per_rank.len(), 2);
        let lmin = eig_sym(&sigma).unwrap().min_eigenvalue();
        assert!(res
            .delta_star
            .values()
            .iter()
            .all(|&d| (d - lmin).abs() < 1e-12));
        assert!(res.r_star <= 2);
        assert!(eig_sym(&res.omega_star).unwrap().min_eigenvalue() > -1e-9);
    }

    #[test]
    fn dual_function_at_zero_is_tail_energy() {
        // f(0) = ||Σ||_F^2 - ||Σ||_r^2
        let s = SymMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
        let f = dual_function(&s, &SymMatrix::zeros(3), 2).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }
}
