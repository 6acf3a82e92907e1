//! First-order conic solver for small semidefinite programs.
//!
//! Problems are stated in the standard form
//!
//! ```text
//! minimize    c^T x + offset
//! subject to  A x + s = b,   s in K_1 x ... x K_p
//! ```
//!
//! where each `K_i` is a zero cone, a nonnegative orthant, or a PSD cone of
//! symmetric matrices scalarized by [`svec`] (lower triangle, column-major,
//! off-diagonals scaled by `sqrt(2)`). The Lagrange dual is
//! `maximize -b^T y + offset  s.t.  A^T y + c = 0,  y in K*`.
//!
//! Callers depend on the [`ConicSolver`] trait, so a different engine can be
//! plugged in without touching the problem builders. The bundled engine is
//! [`AdmmSolver`].

mod admm;
mod problem;
mod project;
mod sparse;

pub use admm::{AdmmSolver, SolverConfig};
pub use problem::{smat, svec, svec_index, Block, Cone, ProblemBuilder, SdpProblem};
pub use project::project_cone;
pub use sparse::CsrMatrix;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConicError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    InfeasibleSuspected,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::InfeasibleSuspected => "infeasible_suspected",
        })
    }
}

/// Solver output. Residuals are relative:
/// `||A x + s - b||_inf / (1 + max(||A x||_inf, ||b - s||_inf))`,
/// `||A^T y + c||_inf / (1 + max(||A^T y||_inf, ||c||_inf))` and
/// `|c^T x + b^T y| / (1 + max(|c^T x|, |b^T y|))`.
#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Slack, exactly inside the cone.
    pub s: Vec<f64>,
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn max_residual(&self) -> f64 {
        self.primal_residual.max(self.dual_residual).max(self.gap)
    }

    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            x: self.x.clone(),
            y: self.y.clone(),
            s: self.s.clone(),
        }
    }
}

/// Initial primal, dual and slack iterates, in unscaled coordinates.
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
}

pub trait ConicSolver: Send + Sync {
    fn solve(&self, p: &SdpProblem) -> Result<SdpSolution, ConicError> {
        self.solve_warm(p, None)
    }

    fn solve_warm(
        &self,
        p: &SdpProblem,
        warm: Option<&WarmStart>,
    ) -> Result<SdpSolution, ConicError>;
}

/// Solve with the bundled ADMM engine.
pub fn solve(p: &SdpProblem, cfg: &SolverConfig) -> Result<SdpSolution, ConicError> {
    AdmmSolver::new(cfg.clone()).solve(p)
}
