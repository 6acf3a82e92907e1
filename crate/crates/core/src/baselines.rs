//! Comparison heuristics over the diagonal feasible set
//! `{Δ diagonal : Δ >= 0, Σ - Δ >= 0}`.
//!
//! * nuclear norm: `min tr(Σ - Δ)`;
//! * r*-norm: `min ||Σ - Δ||_{r*}`, the dual of the Ky Fan `r`-norm, which
//!   for PSD `M` equals `max(λ_max(M), tr(M) / r)`;
//! * log-det: `Δ_{k+1} = argmin tr(W_k (Σ - Δ))` with
//!   `W_k = (Σ - Δ_k + δ I)^{-1}`, starting from `Δ_0 = 0`.
//!
//! Every SDP is solved on `Σ / ||Σ||_F` and rescaled, as in [`crate::fk`].

use serde::{Deserialize, Serialize};

use crate::conic::{
    AdmmSolver, Block, Cone, ConicError, ConicSolver, ProblemBuilder, SdpProblem, SdpSolution,
    SolveStatus, WarmStart,
};
use crate::matrix::{
    eig_sym, numerical_rank_against, spectral_norm, DiagMatrix, MatrixError, SymMatrix,
};
use crate::report::{self, KeyValues};

/// Inputs must satisfy `λ_min(Σ) > PD_TOL ||Σ||_F`. This only guards
/// against numerically singular input; `vv^T + 1e-6 I` is accepted.
pub const PD_TOL: f64 = 1e-12;
/// Log-det stops once `||Δ_{k+1} - Δ_k||_F <= LOGDET_STEP_TOL ||Σ||_F`.
pub const LOGDET_STEP_TOL: f64 = 1e-7;
/// Slack allowed on the per-step decrease of the log-det surrogate.
pub const LOGDET_MONOTONE_SLACK: f64 = 1e-9;
pub const LOGDET_MAX_ITERS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("covariance is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("rank {r} out of range 1..={n}")]
    RankOutOfRange { r: usize, n: usize },
    #[error("regularization must be positive, got {0}")]
    Regularization(f64),
    #[error(
        "conic solve {iteration} ended with {status} (primal {primal:e}, dual {dual:e}, gap {gap:e})"
    )]
    Solver {
        iteration: usize,
        status: SolveStatus,
        primal: f64,
        dual: f64,
        gap: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NuclearNorm,
    RStar(usize),
    LogDet,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::NuclearNorm => f.write_str("nuclear_norm"),
            Method::RStar(r) => write!(f, "rstar_{r}"),
            Method::LogDet => f.write_str("logdet"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeuristicResult {
    pub method: Method,
    pub delta: DiagMatrix,
    /// Numerical rank of `Σ - Δ`.
    pub implied_rank: usize,
    /// Log-det: index of the last iterate that moved. 1 for the others.
    pub iterations: usize,
    /// Nuclear norm: `tr(Σ - Δ)`; r*-norm: `||Σ - Δ||_{r*}`;
    /// log-det: `log det(Σ - Δ + δ I)`.
    pub objective: f64,
    /// Log-det only: `log det(Σ - Δ_k + δ I)` for `k = 0, 1, ...`.
    pub surrogate: Vec<f64>,
}

impl HeuristicResult {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push("method", self.method)
            .push("implied_rank", self.implied_rank)
            .push("iterations", self.iterations)
            .push_real("objective", self.objective)
            .push("delta", report::reals(self.delta.values()));
        kv
    }
}

fn require_pd(sigma: &SymMatrix) -> Result<(), BaselineError> {
    let min_eig = eig_sym(sigma)?.min_eigenvalue();
    if min_eig <= PD_TOL * sigma.frobenius_norm() {
        return Err(BaselineError::NotPositiveDefinite { min_eig });
    }
    Ok(())
}

/// Builder with variables `d_0 .. d_{n-1}` (and `extra` more), cones
/// `d >= 0` and `Σ - diag(d) >= 0`. Returns the builder and the PSD block.
fn diagonal_set(sigma: &SymMatrix, extra: usize) -> (ProblemBuilder, Block) {
    let n = sigma.n();
    let mut b = ProblemBuilder::new(n + extra);
    let nn = b.block(Cone::NonNeg(n));
    for i in 0..n {
        b.term(nn, i, i, 1.0);
    }
    let psd = b.block(Cone::Psd(n));
    for j in 0..n {
        for i in j..n {
            b.matrix_constant(psd, i, j, sigma.get(i, j));
        }
        b.matrix_term(psd, j, j, j, -1.0);
    }
    (b, psd)
}

fn check(sol: &SdpSolution, iteration: usize) -> Result<(), BaselineError> {
    if sol.status == SolveStatus::Optimal {
        Ok(())
    } else {
        Err(BaselineError::Solver {
            iteration,
            status: sol.status,
            primal: sol.primal_residual,
            dual: sol.dual_residual,
            gap: sol.gap,
        })
    }
}

/// Reads `Δ` from the first `n` variables, clipping round-off below zero.
fn read_delta(x: &[f64], n: usize, scale: f64) -> DiagMatrix {
    DiagMatrix::new(x[..n].iter().map(|&d| (d * scale).max(0.0)).collect())
}

fn finish(
    sigma: &SymMatrix,
    method: Method,
    delta: DiagMatrix,
    iterations: usize,
    objective: f64,
    surrogate: Vec<f64>,
) -> Result<HeuristicResult, BaselineError> {
    let implied_rank = numerical_rank_against(&(sigma - &delta.to_sym()), spectral_norm(sigma)?)?;
    Ok(HeuristicResult {
        method,
        delta,
        implied_rank,
        iterations,
        objective,
        surrogate,
    })
}

/// Nuclear-norm problem `max tr(Δ)` over the diagonal feasible set.
pub fn nuclear_norm_problem(sigma: &SymMatrix) -> SdpProblem {
    let (mut b, _) = diagonal_set(sigma, 0);
    for i in 0..sigma.n() {
        b.cost(i, -1.0);
    }
    b.offset(sigma.trace());
    b.build()
}

pub fn nuclear_norm_solve(sigma: &SymMatrix) -> Result<HeuristicResult, BaselineError> {
    nuclear_norm_solve_with(sigma, &AdmmSolver::default())
}

pub fn nuclear_norm_solve_with(
    sigma: &SymMatrix,
    solver: &dyn ConicSolver,
) -> Result<HeuristicResult, BaselineError> {
    require_pd(sigma)?;
    let scale = sigma.frobenius_norm();
    let sol = solver.solve(&nuclear_norm_problem(&sigma.scale(1.0 / scale)))?;
    check(&sol, 1)?;
    let delta = read_delta(&sol.x, sigma.n(), scale);
    let objective = sigma.trace() - delta.trace();
    finish(sigma, Method::NuclearNorm, delta, 1, objective, Vec::new())
}

/// `min t  s.t.  t I - (Σ - Δ) >= 0,  r t - tr(Σ - Δ) >= 0`, Δ feasible.
/// Variable `t` has index `n`.
pub fn rstar_problem(sigma: &SymMatrix, r: usize) -> SdpProblem {
    let n = sigma.n();
    let t = n;
    let (mut b, _) = diagonal_set(sigma, 1);
    b.cost(t, 1.0);
    let top = b.block(Cone::Psd(n));
    for j in 0..n {
        for i in j..n {
            b.matrix_constant(top, i, j, -sigma.get(i, j));
        }
        b.matrix_term(top, j, j, j, 1.0);
        b.matrix_term(top, j, j, t, 1.0);
    }
    let avg = b.block(Cone::NonNeg(1));
    b.term(avg, 0, t, r as f64).constant(avg, 0, -sigma.trace());
    for i in 0..n {
        b.term(avg, 0, i, 1.0);
    }
    b.build()
}

/// `||M||_{r*} = max(λ_max(M), tr(M) / r)` for PSD `M`.
pub fn rstar_norm_psd(m: &SymMatrix, r: usize) -> Result<f64, MatrixError> {
    Ok(eig_sym(m)?.max_eigenvalue().max(m.trace() / r as f64))
}

pub fn rstar_solve(sigma: &SymMatrix, r: usize) -> Result<HeuristicResult, BaselineError> {
    rstar_solve_with(sigma, r, &AdmmSolver::default())
}

pub fn rstar_solve_with(
    sigma: &SymMatrix,
    r: usize,
    solver: &dyn ConicSolver,
) -> Result<HeuristicResult, BaselineError> {
    let n = sigma.n();
    if r == 0 || r > n {
        return Err(BaselineError::RankOutOfRange { r, n });
    }
    require_pd(sigma)?;
    let scale = sigma.frobenius_norm();
    let sol = solver.solve(&rstar_problem(&sigma.scale(1.0 / scale), r))?;
    check(&sol, 1)?;
    let delta = read_delta(&sol.x, n, scale);
    let objective = sol.x[n] * scale;
    finish(sigma, Method::RStar(r), delta, 1, objective, Vec::new())
}

/// Solves for `r = 1, 2, ..., r_max` and returns the first result whose
/// implied rank is at most `r`, or the last one solved. A solver stall at one
/// `r` is logged and skipped; the error is returned only if every `r` fails.
pub fn rstar_search(
    sigma: &SymMatrix,
    r_max: usize,
    solver: &dyn ConicSolver,
) -> Result<HeuristicResult, BaselineError> {
    if r_max == 0 {
        return Err(BaselineError::RankOutOfRange {
            r: r_max,
            n: sigma.n(),
        });
    }
    let mut last = None;
    let mut stalled = None;
    for r in 1..=r_max.min(sigma.n()) {
        let res = match rstar_solve_with(sigma, r, solver) {
            Ok(res) => res,
            Err(e @ BaselineError::Solver { .. }) => {
                log::debug!("r*-norm search: r = {r}: {e}");
                stalled = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        if res.implied_rank <= r {
            return Ok(res);
        }
        last = Some(res);
    }
    match (last, stalled) {
        (Some(res), _) => Ok(res),
        (None, Some(e)) => Err(e),
        (None, None) => Err(BaselineError::RankOutOfRange {
            r: r_max,
            n: sigma.n(),
        }),
    }
}

/// Default regularization `1e-6 tr(Σ) / n`.
pub fn default_logdet_delta(sigma: &SymMatrix) -> f64 {
    1e-6 * sigma.trace() / sigma.n() as f64
}

fn log_det_shifted(sigma: &SymMatrix, delta: &DiagMatrix, reg: f64) -> Result<f64, BaselineError> {
    let m = (sigma - &delta.to_sym()).shift(reg);
    let eig = eig_sym(&m)?;
    Ok(eig
        .eigenvalues
        .iter()
        .map(|l| l.max(f64::MIN_POSITIVE).ln())
        .sum())
}

pub fn logdet_solve(
    sigma: &SymMatrix,
    delta_reg: f64,
    max_iters: usize,
) -> Result<HeuristicResult, BaselineError> {
    logdet_solve_with(sigma, delta_reg, max_iters, &AdmmSolver::default())
}

/// Iterates until the step is below `LOGDET_STEP_TOL ||Σ||_F`, the
/// surrogate stops decreasing (solver accuracy reached), or `max_iters`.
/// Each subproblem is warm-started from the previous one.
pub fn logdet_solve_with(
    sigma: &SymMatrix,
    delta_reg: f64,
    max_iters: usize,
    solver: &dyn ConicSolver,
) -> Result<HeuristicResult, BaselineError> {
    if !(delta_reg > 0.0) {
        return Err(BaselineError::Regularization(delta_reg));
    }
    require_pd(sigma)?;
    let n = sigma.n();
    let scale = sigma.frobenius_norm();
    let unit = sigma.scale(1.0 / scale);
    let (skeleton, _) = diagonal_set(&unit, 0);
    let base = skeleton.build();

    let mut delta = DiagMatrix::zeros(n);
    let mut surrogate = vec![log_det_shifted(sigma, &delta, delta_reg)?];
    let mut warm: Option<WarmStart> = None;
    let mut iterations = 0;
    for k in 1..=max_iters {
        let shifted = (sigma - &delta.to_sym()).shift(delta_reg);
        let w = shifted
            .matrix()
            .clone()
            .try_inverse()
            .ok_or(MatrixError::NoConvergence {
                iterations: k,
                residual: f64::NAN,
            })?;
        // min tr(W (Σ - Δ)) = const - sum_i W_ii d_i; W is rescaled to unit
        // size since only its direction matters
        let wmax = (0..n).fold(0.0f64, |a, i| a.max(w[(i, i)].abs()));
        let mut p = base.clone();
        for i in 0..n {
            p.c[i] = -w[(i, i)] / wmax;
        }
        let sol = solver.solve_warm(&p, warm.as_ref())?;
        check(&sol, k)?;
        warm = Some(sol.warm_start());
        let next = read_delta(&sol.x, n, scale);
        let value = log_det_shifted(sigma, &next, delta_reg)?;
        let prev = *surrogate.last().expect("nonempty");
        if value > prev + LOGDET_MONOTONE_SLACK {
            log::debug!(
                "logdet: surrogate rose by {:e} at step {k}; stopping",
                value - prev
            );
            break;
        }
        let step = (&next.to_sym() - &delta.to_sym()).frobenius_norm();
        if step <= LOGDET_STEP_TOL * scale {
            break;
        }
        delta = next;
        surrogate.push(value);
        iterations = k;
    }
    let objective = *surrogate.last().expect("nonempty");
    finish(
        sigma,
        Method::LogDet,
        delta,
        iterations,
        objective,
        surrogate,
    )
}
