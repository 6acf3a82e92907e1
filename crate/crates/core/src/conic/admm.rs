use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::problem::{Cone, SdpProblem};
use super::project::project_in_place;
use super::{ConicError, ConicSolver, SdpSolution, SolveStatus, WarmStart};

/// Equality rows get this multiple of the base step size.
const EQ_RHO_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;
const ADAPT_RATIO: f64 = 5.0;
const DIVERGENCE: f64 = 1e12;
/// An accelerated point is kept only if its fixed-point residual is at
/// most this multiple of the last plain residual.
const AA_SAFEGUARD: f64 = 1.0;
const AA_REGULARIZATION: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative tolerance on primal residual, dual residual and gap.
    pub tol: f64,
    pub max_iters: usize,
    /// Over-relaxation parameter in `(0, 2)`.
    pub alpha: f64,
    /// Initial ADMM step size.
    pub rho: f64,
    /// Proximal regularization of the x-update.
    pub sigma: f64,
    /// Ruiz equilibration passes; 0 disables scaling.
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
    /// Residuals are evaluated every `check_every` iterations.
    pub check_every: usize,
    /// Step size is reconsidered every `adapt_every` iterations.
    pub adapt_every: usize,
    /// Anderson acceleration memory; 0 disables it.
    pub anderson_mem: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iters: 100_000,
            alpha: 1.6,
            rho: 0.1,
            sigma: 1e-6,
            scaling_iters: 15,
            adaptive_rho: true,
            check_every: 10,
            adapt_every: 50,
            anderson_mem: 10,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let bad = |what: &str| Err(ConicError::Config(what.to_string()));
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad("alpha must lie in (0, 2)");
        }
        if !(self.rho > 0.0) || !(self.sigma > 0.0) {
            return bad("rho and sigma must be positive");
        }
        if self.max_iters == 0 || self.check_every == 0 || self.adapt_every == 0 {
            return bad("iteration counts must be positive");
        }
        Ok(())
    }
}

/// ADMM operator splitting on `min c^T x  s.t.  A x = z, z in b - K`.
///
/// The x-update solves the regularized normal equations
/// `(sigma I + A^T R A) x = sigma x - c + A^T (R z - y)` with a dense
/// Cholesky factor that is recomputed only when the step size changes.
/// Ruiz equilibration is applied first, with a single scale per PSD
/// block so the cone is mapped onto itself.
#[derive(Clone, Debug, Default)]
pub struct AdmmSolver {
    pub config: SolverConfig,
}

impl AdmmSolver {
    pub fn new(config: SolverConfig) -> Self {
        AdmmSolver { config }
    }
}

impl ConicSolver for AdmmSolver {
    fn solve_warm(
        &self,
        p: &SdpProblem,
        warm: Option<&WarmStart>,
    ) -> Result<SdpSolution, ConicError> {
        p.validate()?;
        self.config.validate()?;
        if let Some(w) = warm {
            if w.x.len() != p.num_vars() || w.y.len() != p.num_rows() || w.s.len() != p.num_rows() {
                return Err(ConicError::Dimension("warm start dimensions".into()));
            }
        }
        Ok(Workspace::new(p, &self.config).run(warm))
    }
}

struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    cost: f64,
}

fn equilibrate(p: &SdpProblem, iters: usize) -> Scaling {
    let m = p.num_rows();
    let n = p.num_vars();
    let mut d = vec![1.0; m];
    let mut e = vec![1.0; n];
    let clamp = |x: f64| x.clamp(SCALE_MIN, SCALE_MAX);
    let inv_sqrt = |x: f64| if x > 0.0 { 1.0 / x.sqrt() } else { 1.0 };
    for _ in 0..iters {
        let cur = p.a.scaled(&d, &e);
        let cn = cur.col_inf_norms();
        let rn = cur.row_inf_norms();
        for j in 0..n {
            e[j] = clamp(e[j] * inv_sqrt(cn[j]));
        }
        let mut start = 0;
        for cone in &p.cones {
            let len = cone.dim();
            let rows = start..start + len;
            match cone {
                Cone::Psd(_) => {
                    let worst = rn[rows.clone()].iter().fold(0.0f64, |a, &b| a.max(b));
                    let f = inv_sqrt(worst);
                    for i in rows {
                        d[i] = clamp(d[i] * f);
                    }
                }
                _ => {
                    for i in rows {
                        d[i] = clamp(d[i] * inv_sqrt(rn[i]));
                    }
                }
            }
            start += len;
        }
    }
    let cmax =
        p.c.iter()
            .zip(&e)
            .fold(0.0f64, |a, (c, e)| a.max((c * e).abs()));
    let cost = if cmax > 0.0 {
        1.0 / cmax.clamp(SCALE_MIN, SCALE_MAX)
    } else {
        1.0
    };
    Scaling { d, e, cost }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Residuals {
    primal: f64,
    dual: f64,
    gap: f64,
    primal_objective: f64,
    dual_objective: f64,
}

struct Workspace<'a> {
    p: &'a SdpProblem,
    cfg: &'a SolverConfig,
    scaling: Scaling,
    a: super::sparse::CsrMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    eq_row: Vec<bool>,
    rho: f64,
    rho_vec: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> Workspace<'a> {
    fn new(p: &'a SdpProblem, cfg: &'a SolverConfig) -> Self {
        let scaling = equilibrate(p, cfg.scaling_iters);
        let a = p.a.scaled(&scaling.d, &scaling.e);
        let b: Vec<f64> = p.b.iter().zip(&scaling.d).map(|(b, d)| b * d).collect();
        let c: Vec<f64> =
            p.c.iter()
                .zip(&scaling.e)
                .map(|(c, e)| scaling.cost * c * e)
                .collect();
        let mut eq_row = Vec::with_capacity(p.num_rows());
        for cone in &p.cones {
            eq_row.extend(std::iter::repeat_n(
                matches!(cone, Cone::Zero(_)),
                cone.dim(),
            ));
        }
        let rho = cfg.rho;
        let (rho_vec, chol) = Self::factor(&a, &eq_row, rho, cfg.sigma);
        Workspace {
            p,
            cfg,
            scaling,
            a,
            b,
            c,
            eq_row,
            rho,
            rho_vec,
            chol,
        }
    }

    fn factor(
        a: &super::sparse::CsrMatrix,
        eq_row: &[bool],
        rho: f64,
        sigma: f64,
    ) -> (Vec<f64>, Cholesky<f64, Dyn>) {
        let rho_vec: Vec<f64> = eq_row
            .iter()
            .map(|&eq| if eq { rho * EQ_RHO_FACTOR } else { rho })
            .collect();
        let n = a.ncols();
        let mut k = DMatrix::from_vec(n, n, a.gram_weighted(&rho_vec));
        for i in 0..n {
            k[(i, i)] += sigma;
        }
        let chol = Cholesky::new(k).expect("sigma I + A^T R A is positive definite");
        (rho_vec, chol)
    }

    fn unscale(&self, x: &[f64], z: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let s = &self.scaling;
        let xu = x.iter().zip(&s.e).map(|(x, e)| x * e).collect();
        let zu = z.iter().zip(&s.d).map(|(z, d)| z / d).collect();
        let yu = y.iter().zip(&s.d).map(|(y, d)| y * d / s.cost).collect();
        (xu, zu, yu)
    }

    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
        let p = self.p;
        let (xu, zu, yu) = self.unscale(x, z, y);
        let mut ax = vec![0.0; p.num_rows()];
        p.a.mul_vec(&xu, &mut ax);
        let mut aty = vec![0.0; p.num_vars()];
        p.a.mul_t_vec(&yu, &mut aty);

        let r_prim: Vec<f64> = ax.iter().zip(&zu).map(|(a, z)| a - z).collect();
        let r_dual: Vec<f64> = aty.iter().zip(&p.c).map(|(a, c)| a + c).collect();
        let cx = dot(&p.c, &xu);
        let by = dot(&p.b, &yu);
        Residuals {
            primal: inf_norm(&r_prim) / (1.0 + inf_norm(&ax).max(inf_norm(&zu))),
            dual: inf_norm(&r_dual) / (1.0 + inf_norm(&aty).max(inf_norm(&p.c))),
            gap: (cx + by).abs() / (1.0 + cx.abs().max(by.abs())),
            primal_objective: cx + p.objective_offset,
            dual_objective: -by + p.objective_offset,
        }
    }

    /// OSQP-style step-size ratio from scaled residuals.
    fn rho_ratio(&self, x: &[f64], z: &[f64], y: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.b.len()];
        self.a.mul_vec(x, &mut ax);
        let mut aty = vec![0.0; self.c.len()];
        self.a.mul_t_vec(y, &mut aty);
        let prim = inf_norm(&ax.iter().zip(z).map(|(a, z)| a - z).collect::<Vec<_>>());
        let dual = inf_norm(
            &aty.iter()
                .zip(&self.c)
                .map(|(a, c)| a + c)
                .collect::<Vec<_>>(),
        );
        let prim_scale = inf_norm(&ax).max(inf_norm(z)).max(1e-30);
        let dual_scale = inf_norm(&aty).max(inf_norm(&self.c)).max(1e-30);
        let num = prim / prim_scale;
        let den = dual / dual_scale;
        if num <= 0.0 || den <= 0.0 || !num.is_finite() || !den.is_finite() {
            return 1.0;
        }
        (num / den).sqrt()
    }

    fn project_c(&self, w: &mut [f64]) {
        // Pi_C(w) = b - Pi_K(b - w)
        for (wi, bi) in w.iter_mut().zip(&self.b) {
            *wi = bi - *wi;
        }
        let mut start = 0;
        for cone in &self.p.cones {
            let len = cone.dim();
            project_in_place(&mut w[start..start + len], *cone);
            start += len;
        }
        for (wi, bi) in w.iter_mut().zip(&self.b) {
            *wi = bi - *wi;
        }
    }

    /// `(x, z, y) -> (x, sqrt(rho) z, y / sqrt(rho))`, the coordinates in
    /// which the ADMM map is nonexpansive.
    fn to_metric(&self, w: &mut [f64]) {
        let n = self.c.len();
        let m = self.b.len();
        for (i, r) in self.rho_vec.iter().enumerate() {
            let s = r.sqrt();
            w[n + i] *= s;
            w[n + m + i] /= s;
        }
    }

    fn from_metric(&self, w: &mut [f64]) {
        let n = self.c.len();
        let m = self.b.len();
        for (i, r) in self.rho_vec.iter().enumerate() {
            let s = r.sqrt();
            w[n + i] /= s;
            w[n + m + i] *= s;
        }
    }

    fn weighted_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.c.len();
        let m = self.b.len();
        let mut acc: f64 = a[..n]
            .iter()
            .zip(&b[..n])
            .map(|(u, v)| (u - v) * (u - v))
            .sum();
        for (i, r) in self.rho_vec.iter().enumerate() {
            let dz = a[n + i] - b[n + i];
            let dy = a[n + m + i] - b[n + m + i];
            acc += r * dz * dz + dy * dy / r;
        }
        acc.sqrt()
    }

    /// One over-relaxed ADMM pass from `(x, z, y)` into `out`.
    fn step(&self, w: &[f64], out: &mut [f64], bufs: &mut Buffers) {
        let n = self.c.len();
        let m = self.b.len();
        let (x, rest) = w.split_at(n);
        let (z, y) = rest.split_at(m);
        let (xo, rest) = out.split_at_mut(n);
        let (zo, yo) = rest.split_at_mut(m);
        let alpha = self.cfg.alpha;

        for i in 0..m {
            bufs.tmp_m[i] = self.rho_vec[i] * z[i] - y[i];
        }
        self.a.mul_t_vec(&bufs.tmp_m, &mut bufs.tmp_n);
        for j in 0..n {
            bufs.rhs[j] = self.cfg.sigma * x[j] - self.c[j] + bufs.tmp_n[j];
        }
        let xt = self.chol.solve(&bufs.rhs);
        self.a.mul_vec(xt.as_slice(), &mut bufs.zt);
        for j in 0..n {
            xo[j] = alpha * xt[j] + (1.0 - alpha) * x[j];
        }
        for i in 0..m {
            bufs.zt[i] = alpha * bufs.zt[i] + (1.0 - alpha) * z[i];
            zo[i] = bufs.zt[i] + y[i] / self.rho_vec[i];
        }
        self.project_c(zo);
        for i in 0..m {
            yo[i] = y[i] + self.rho_vec[i] * (bufs.zt[i] - zo[i]);
        }
    }

    fn run(mut self, warm: Option<&WarmStart>) -> SdpSolution {
        let n = self.p.num_vars();
        let m = self.p.num_rows();
        let cfg = self.cfg;
        let mut w = vec![0.0; n + 2 * m];
        if let Some(ws) = warm {
            let s = &self.scaling;
            for j in 0..n {
                w[j] = ws.x[j] / s.e[j];
            }
            for i in 0..m {
                w[n + i] = (self.p.b[i] - ws.s[i]) * s.d[i];
                w[n + m + i] = ws.y[i] * s.cost / s.d[i];
            }
        }
        let mut bufs = Buffers {
            rhs: DVector::zeros(n),
            tmp_m: vec![0.0; m],
            tmp_n: vec![0.0; n],
            zt: vec![0.0; m],
        };
        let mut out = vec![0.0; n + 2 * m];
        // last plain ADMM output, the fallback when an accelerated point is rejected
        let mut safe = w.clone();
        let mut safe_norm = f64::INFINITY;
        let mut accelerated = false;
        let mut aa = Anderson::new(cfg.anderson_mem, n + 2 * m);

        let mut status = SolveStatus::MaxIters;
        let (x0, rest) = w.split_at(n);
        let (z0, y0) = rest.split_at(m);
        let mut res = self.residuals(x0, z0, y0);
        let mut iterations = 0;
        let mut next_adapt = cfg.adapt_every;
        let mut adapt_interval = cfg.adapt_every;

        for k in 1..=cfg.max_iters {
            iterations = k;
            self.step(&w, &mut out, &mut bufs);
            let g_norm = self.weighted_distance(&w, &out);
            if accelerated && !(g_norm <= AA_SAFEGUARD * safe_norm) {
                // reject: restart from the plain iterate
                w.copy_from_slice(&safe);
                aa.reset();
                accelerated = false;
                continue;
            }

            if k % cfg.check_every == 0 || k == cfg.max_iters {
                let (x, rest) = out.split_at(n);
                let (z, y) = rest.split_at(m);
                res = self.residuals(x, z, y);
                if res.primal.max(res.dual).max(res.gap) <= cfg.tol {
                    status = SolveStatus::Optimal;
                    w.copy_from_slice(&out);
                    break;
                }
                let blowup = inf_norm(&out);
                if !blowup.is_finite() || blowup > DIVERGENCE {
                    status = SolveStatus::InfeasibleSuspected;
                    w.copy_from_slice(&out);
                    break;
                }
                if cfg.adaptive_rho && k >= next_adapt {
                    next_adapt = k + adapt_interval;
                    let ratio = self.rho_ratio(x, z, y);
                    if !(1.0 / ADAPT_RATIO..=ADAPT_RATIO).contains(&ratio) {
                        let new_rho = (self.rho * ratio).clamp(RHO_MIN, RHO_MAX);
                        if new_rho != self.rho {
                            self.rho = new_rho;
                            let (rv, chol) =
                                Self::factor(&self.a, &self.eq_row, self.rho, cfg.sigma);
                            self.rho_vec = rv;
                            self.chol = chol;
                            // each change makes the next one wait twice as long
                            adapt_interval *= 2;
                            next_adapt = k + adapt_interval;
                            aa.reset();
                            safe_norm = f64::INFINITY;
                            accelerated = false;
                            w.copy_from_slice(&out);
                            continue;
                        }
                    }
                }
            }

            safe.copy_from_slice(&out);
            safe_norm = g_norm;
            self.to_metric(&mut w);
            self.to_metric(&mut out);
            accelerated = aa.extrapolate(&w, &mut out);
            self.from_metric(&mut out);
            std::mem::swap(&mut w, &mut out);
        }

        if status == SolveStatus::MaxIters {
            // report the last plain iterate, which satisfies the cone constraints
            w.copy_from_slice(&safe);
            let (x, rest) = w.split_at(n);
            let (z, y) = rest.split_at(m);
            res = self.residuals(x, z, y);
        }
        let (x, rest) = w.split_at(n);
        let (z, y) = rest.split_at(m);
        let (xu, zu, yu) = self.unscale(x, z, y);
        let s: Vec<f64> = self.p.b.iter().zip(&zu).map(|(b, z)| b - z).collect();
        SdpSolution {
            x: xu,
            y: yu,
            s,
            status,
            primal_residual: res.primal,
            dual_residual: res.dual,
            gap: res.gap,
            primal_objective: res.primal_objective,
            dual_objective: res.dual_objective,
            iterations,
        }
    }
}

struct Buffers {
    rhs: DVector<f64>,
    tmp_m: Vec<f64>,
    tmp_n: Vec<f64>,
    zt: Vec<f64>,
}

/// Type-II Anderson acceleration of the fixed-point map `w -> F(w)`.
struct Anderson {
    mem: usize,
    dim: usize,
    /// Columns `w_{i+1} - w_i` and `g_{i+1} - g_i` with `g = F(w) - w`.
    dw: Vec<Vec<f64>>,
    dg: Vec<Vec<f64>>,
    prev_w: Option<Vec<f64>>,
    prev_g: Vec<f64>,
    g: Vec<f64>,
}

impl Anderson {
    fn new(mem: usize, dim: usize) -> Self {
        Anderson {
            mem,
            dim,
            dw: Vec::new(),
            dg: Vec::new(),
            prev_w: None,
            prev_g: vec![0.0; dim],
            g: vec![0.0; dim],
        }
    }

    fn reset(&mut self) {
        self.dw.clear();
        self.dg.clear();
        self.prev_w = None;
    }

    /// Records the pair `(w, F(w))` and overwrites `fw` with the
    /// extrapolated point. Returns false when no extrapolation was made.
    fn extrapolate(&mut self, w: &[f64], fw: &mut [f64]) -> bool {
        if self.mem == 0 {
            return false;
        }
        for i in 0..self.dim {
            self.g[i] = fw[i] - w[i];
        }
        if let Some(pw) = self.prev_w.as_mut() {
            if self.dw.len() == self.mem {
                self.dw.remove(0);
                self.dg.remove(0);
            }
            self.dw
                .push(w.iter().zip(pw.iter()).map(|(a, b)| a - b).collect());
            self.dg.push(
                self.g
                    .iter()
                    .zip(&self.prev_g)
                    .map(|(a, b)| a - b)
                    .collect(),
            );
            pw.copy_from_slice(w);
        } else {
            self.prev_w = Some(w.to_vec());
        }
        self.prev_g.copy_from_slice(&self.g);

        let k = self.dg.len();
        if k == 0 {
            return false;
        }
        let mut gram = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        for i in 0..k {
            for j in 0..=i {
                let v = dot(&self.dg[i], &self.dg[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
            rhs[i] = dot(&self.dg[i], &self.g);
        }
        let reg = AA_REGULARIZATION * gram.trace().max(f64::MIN_POSITIVE);
        for i in 0..k {
            gram[(i, i)] += reg;
        }
        let Some(chol) = Cholesky::new(gram) else {
            self.reset();
            return false;
        };
        let gamma = chol.solve(&rhs);
        if !gamma.iter().all(|v| v.is_finite()) {
            self.reset();
            return false;
        }
        for (j, &gj) in gamma.iter().enumerate() {
            for i in 0..self.dim {
                fw[i] -= gj * (self.dw[j][i] + self.dg[j][i]);
            }
        }
        true
    }
}
