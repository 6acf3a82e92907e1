//! Monte-Carlo success-rate experiments.
//!
//! A trial draws `Ω̂` (fixed, or `X^T X` with `X` an `r×n` standard normal
//! matrix), a diagonal `Δ` with prescribed Frobenius norm and uniform
//! direction, forms `Σ = Ω̂ + Δ` and asks each method for a rank. The
//! trial succeeds for a method when that rank is at most `r`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, default_logdet_delta, LOGDET_MAX_ITERS};
use crate::conic::{AdmmSolver, SolverConfig};
use crate::fk::{self, FkConfig, FkInstance, Variant};
use crate::matrix::{eig_sym, numerical_rank, read_matrix, DiagMatrix, MatrixError, SymMatrix};

/// Redraws allowed per trial before it is skipped.
pub const MAX_ATTEMPTS: usize = 1000;
pub const CSV_HEADER: &str =
    "method,noise_frob,trials,successes,success_rate,mean_rank,mean_seconds";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn config_err(key: &str, msg: impl Into<String>) -> BenchError {
    BenchError::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Proposed,
    NuclearNorm,
    Rstar,
    Logdet,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 4] = [
        BenchMethod::Proposed,
        BenchMethod::NuclearNorm,
        BenchMethod::Rstar,
        BenchMethod::Logdet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Proposed => "proposed",
            BenchMethod::NuclearNorm => "nuclear_norm",
            BenchMethod::Rstar => "rstar",
            BenchMethod::Logdet => "logdet",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OmegaSource {
    Random,
    Fixed(SymMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub r: usize,
    pub noise_levels: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<BenchMethod>,
    pub seed: u64,
    pub omega_source: OmegaSource,
    /// Record wall time per method; off by default so output is reproducible.
    pub timing: bool,
    pub solver: SolverConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n: usize,
    r: usize,
    noise_levels: Vec<f64>,
    trials: usize,
    #[serde(default)]
    methods: Vec<BenchMethod>,
    seed: u64,
    omega_matrix: Option<Vec<Vec<f64>>>,
    omega_file: Option<PathBuf>,
    #[serde(default)]
    timing: bool,
    #[serde(default)]
    solver: SolverConfig,
}

impl ExperimentConfig {
    /// Parses a TOML config. A relative `omega_file` is resolved against
    /// `base_dir`.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self, BenchError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| BenchError::Parse(e.to_string()))?;
        let omega_source = match (raw.omega_matrix, raw.omega_file) {
            (Some(_), Some(_)) => {
                return Err(config_err(
                    "omega_file",
                    "give either omega_matrix or omega_file",
                ))
            }
            (Some(rows), None) => OmegaSource::Fixed(
                SymMatrix::from_rows(&rows)
                    .map_err(|e| config_err("omega_matrix", e.to_string()))?,
            ),
            (None, Some(path)) => {
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path,
                };
                OmegaSource::Fixed(
                    read_matrix(&path).map_err(|e| config_err("omega_file", e.to_string()))?,
                )
            }
            (None, None) => OmegaSource::Random,
        };
        let cfg = ExperimentConfig {
            n: raw.n,
            r: raw.r,
            noise_levels: raw.noise_levels,
            trials: raw.trials,
            methods: raw.methods,
            seed: raw.seed,
            omega_source,
            timing: raw.timing,
            solver: raw.solver,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path.parent())
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.r < 1 || self.r >= self.n {
            return Err(config_err(
                "r",
                format!("need 1 <= r < n, got r = {}, n = {}", self.r, self.n),
            ));
        }
        if self.trials == 0 {
            return Err(config_err("trials", "must be at least 1"));
        }
        if self.noise_levels.is_empty() {
            return Err(config_err("noise_levels", "must not be empty"));
        }
        if self
            .noise_levels
            .iter()
            .any(|&l| !(l > 0.0 && l.is_finite()))
        {
            return Err(config_err(
                "noise_levels",
                "levels must be positive and finite",
            ));
        }
        if self.noise_levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err(
                "noise_levels",
                "levels must be strictly increasing",
            ));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(config_err(
                    "methods",
                    format!("`{}` listed twice", m.name()),
                ));
            }
        }
        self.solver
            .validate()
            .map_err(|e| config_err("solver", e.to_string()))?;
        if let OmegaSource::Fixed(omega) = &self.omega_source {
            if omega.n() != self.n {
                return Err(config_err(
                    "omega_matrix",
                    format!(
                        "matrix is {}x{}, expected n = {}",
                        omega.n(),
                        omega.n(),
                        self.n
                    ),
                ));
            }
            let rank = numerical_rank(omega)?;
            if rank != self.r {
                return Err(config_err(
                    "omega_matrix",
                    format!("matrix has rank {rank}, expected r = {}", self.r),
                ));
            }
            if eig_sym(omega)?.min_eigenvalue() < -fk::PSD_TOL * omega.frobenius_norm().max(1.0) {
                return Err(config_err(
                    "omega_matrix",
                    "matrix is not positive semidefinite",
                ));
            }
        }
        Ok(())
    }
}

/// `X^T X` with `X` an `r×n` matrix of independent standard normals.
pub fn gen_low_rank<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> SymMatrix {
    let x = nalgebra::DMatrix::<f64>::from_fn(r, n, |_, _| rng.sample(StandardNormal));
    SymMatrix::new(x.transpose() * x).expect("square")
}

/// Diagonal with entries `norm_f d / ||d||`, `d` uniform on `[0, 1]^n`.
pub fn gen_noise<R: Rng + ?Sized>(n: usize, norm_f: f64, rng: &mut R) -> DiagMatrix {
    loop {
        let d: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return DiagMatrix::new(d.iter().map(|x| x * norm_f / norm).collect());
        }
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at noise level `level`.
pub fn trial_seed(seed: u64, level: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ level as u64) ^ trial as u64)
}

/// Draws `(Ω̂, Δ, Σ)` with `Σ` positive definite, or `None` after
/// [`MAX_ATTEMPTS`] rejections.
pub fn draw_instance<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    noise: f64,
    rng: &mut R,
) -> Result<Option<(SymMatrix, DiagMatrix, SymMatrix)>, MatrixError> {
    for _ in 0..MAX_ATTEMPTS {
        let omega = match &cfg.omega_source {
            OmegaSource::Fixed(m) => m.clone(),
            OmegaSource::Random => gen_low_rank(cfg.n, cfg.r, rng),
        };
        let delta = gen_noise(cfg.n, noise, rng);
        let sigma = &omega + &delta.to_sym();
        if eig_sym(&sigma)?.min_eigenvalue() > fk::PSD_TOL * sigma.frobenius_norm().max(1.0) {
            return Ok(Some((omega, delta, sigma)));
        }
    }
    Ok(None)
}

/// Outcome of one method on one trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodOutcome {
    /// `None` when the method failed.
    pub rank: Option<usize>,
    pub seconds: f64,
}

/// Rank reported by `method` on `sigma`; errors are logged and map to `None`.
pub fn run_method(
    method: BenchMethod,
    sigma: &SymMatrix,
    r: usize,
    solver: &SolverConfig,
) -> Option<usize> {
    let engine = AdmmSolver::new(solver.clone());
    let out = match method {
        BenchMethod::Proposed => {
            let cfg = FkConfig {
                solver: solver.clone(),
                ..FkConfig::default()
            };
            FkInstance::new(sigma.clone(), Variant::FrischKalman)
                .and_then(|inst| fk::solve_with(&inst, 1, &cfg, &engine))
                .map(|res| res.r_star)
                .map_err(|e| e.to_string())
        }
        BenchMethod::NuclearNorm => baselines::nuclear_norm_solve_with(sigma, &engine)
            .map(|h| h.implied_rank)
            .map_err(|e| e.to_string()),
        BenchMethod::Rstar => baselines::rstar_search(sigma, r, &engine)
            .map(|h| h.implied_rank)
            .map_err(|e| e.to_string()),
        BenchMethod::Logdet => baselines::logdet_solve_with(
            sigma,
            default_logdet_delta(sigma),
            LOGDET_MAX_ITERS,
            &engine,
        )
        .map(|h| h.implied_rank)
        .map_err(|e| e.to_string()),
    };
    match out {
        Ok(rank) => Some(rank),
        Err(e) => {
            log::warn!("{} failed: {e}", method.name());
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub level: usize,
    pub trial: usize,
    /// No positive definite `Σ` was drawn.
    pub skipped: bool,
    /// In the order of `cfg.methods`.
    pub methods: Vec<MethodOutcome>,
}

pub fn run_trial(
    cfg: &ExperimentConfig,
    level: usize,
    trial: usize,
) -> Result<TrialOutcome, MatrixError> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, level, trial));
    let Some((_, _, sigma)) = draw_instance(cfg, cfg.noise_levels[level], &mut rng)? else {
        log::warn!("level {level} trial {trial}: no positive definite draw; skipped");
        return Ok(TrialOutcome {
            level,
            trial,
            skipped: true,
            methods: Vec::new(),
        });
    };
    let methods = cfg
        .methods
        .iter()
        .map(|&m| {
            let t = Instant::now();
            let rank = run_method(m, &sigma, cfg.r, &cfg.solver);
            MethodOutcome {
                rank,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect();
    Ok(TrialOutcome {
        level,
        trial,
        skipped: false,
        methods,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuccessRow {
    pub method: BenchMethod,
    pub noise_frob: f64,
    /// Trials run (skipped draws excluded).
    pub trials: usize,
    pub successes: usize,
    pub skipped: usize,
    /// Over trials where the method returned a rank.
    pub mean_rank: Option<f64>,
    pub mean_seconds: Option<f64>,
}

impl SuccessRow {
    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SuccessTable {
    /// Method-major, then by noise level.
    pub rows: Vec<SuccessRow>,
}

impl SuccessTable {
    pub fn rate(&self, method: BenchMethod, noise_frob: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.noise_frob == noise_frob)
            .map(SuccessRow::success_rate)
    }

    /// Success rates of one method in level order.
    pub fn rates(&self, method: BenchMethod) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(SuccessRow::success_rate)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{},{}",
                row.method.name(),
                row.noise_frob,
                row.trials,
                row.successes,
                row.success_rate(),
                opt(row.mean_rank),
                opt(row.mean_seconds),
            );
        }
        out
    }

    /// One block per method, `noise_frob success_rate` per line, blocks
    /// separated by two blank lines (gnuplot `index`).
    pub fn to_gnuplot(&self) -> String {
        let mut out = String::new();
        let mut methods: Vec<BenchMethod> = Vec::new();
        for row in &self.rows {
            if !methods.contains(&row.method) {
                methods.push(row.method);
            }
        }
        for (i, m) in methods.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            let _ = writeln!(out, "# {}", m.name());
            let _ = writeln!(out, "# noise_frob success_rate");
            for row in self.rows.iter().filter(|r| r.method == *m) {
                let _ = writeln!(out, "{} {:.6}", row.noise_frob, row.success_rate());
            }
        }
        out
    }

    pub fn export(&self, path: &Path) -> Result<(), BenchError> {
        std::fs::write(path, self.to_csv()).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn export_gnuplot(&self, path: &Path) -> Result<(), BenchError> {
        std::fs::write(path, self.to_gnuplot()).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Runs all trials, in parallel, and tabulates them in a fixed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SuccessTable, BenchError> {
    cfg.validate()?;
    if cfg.methods.is_empty() {
        return Ok(SuccessTable::default());
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.noise_levels.len())
        .flat_map(|l| (0..cfg.trials).map(move |t| (l, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(l, t)| run_trial(cfg, l, t))
        .collect::<Result<_, _>>()?;
    Ok(tabulate(cfg, &outcomes))
}

pub fn tabulate(cfg: &ExperimentConfig, outcomes: &[TrialOutcome]) -> SuccessTable {
    let mut rows = Vec::new();
    for (mi, &method) in cfg.methods.iter().enumerate() {
        for (li, &noise) in cfg.noise_levels.iter().enumerate() {
            let at_level: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.level == li).collect();
            let run: Vec<&MethodOutcome> = at_level
                .iter()
                .filter(|o| !o.skipped)
                .map(|o| &o.methods[mi])
                .collect();
            let ranks: Vec<usize> = run.iter().filter_map(|m| m.rank).collect();
            let mean =
                |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
            rows.push(SuccessRow {
                method,
                noise_frob: noise,
                trials: run.len(),
                successes: ranks.iter().filter(|&&k| k <= cfg.r).count(),
                skipped: at_level.len() - run.len(),
                mean_rank: mean(&ranks.iter().map(|&k| k as f64).collect::<Vec<_>>()),
                mean_seconds: if cfg.timing {
                    mean(&run.iter().map(|m| m.seconds).collect::<Vec<_>>())
                } else {
                    None
                },
            });
        }
    }
    SuccessTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE_STUDY_CFG: &str = r#"
n = 3
r = 1
noise_levels = [0.5, 1.0]
trials = 2
methods = ["proposed", "nuclear_norm"]
seed = 7
omega_matrix = [[16.0, 8.0, 4.0], [8.0, 4.0, 2.0], [4.0, 2.0, 1.0]]
"#;

    #[test]
    fn low_rank_draw_has_rank_r() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = gen_low_rank(10, 5, &mut rng);
        assert_eq!(numerical_rank(&m).unwrap(), 5);
        let m = gen_low_rank(3, 1, &mut rng);
        assert_eq!(numerical_rank(&m).unwrap(), 1);
    }

    #[test]
    fn noise_has_exact_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let d = gen_noise(3, 2.0, &mut rng);
            assert!((d.frobenius_norm() - 2.0).abs() < 1e-12);
            assert!(d.is_nonneg());
        }
        assert_eq!(gen_noise(1, 5.0, &mut rng).values(), &[5.0]);
    }

    #[test]
    fn trial_seeds_differ() {
        let mut seen = std::collections::HashSet::new();
        for l in 0..10 {
            for t in 0..100 {
                assert!(seen.insert(trial_seed(42, l, t)));
            }
        }
        assert_ne!(trial_seed(1, 0, 0), trial_seed(2, 0, 0));
    }

    #[test]
    fn parses_fixed_config() {
        let cfg = ExperimentConfig::from_toml(CASE_STUDY_CFG, None).unwrap();
        assert_eq!(
            cfg.methods,
            vec![BenchMethod::Proposed, BenchMethod::NuclearNorm]
        );
        assert!(matches!(cfg.omega_source, OmegaSource::Fixed(_)));
        assert!(!cfg.timing);
    }

    #[test]
    fn config_errors_name_the_key() {
        let bad_r = CASE_STUDY_CFG.replace("r = 1", "r = 2");
        match ExperimentConfig::from_toml(&bad_r, None) {
            Err(BenchError::Config { key, .. }) => assert_eq!(key, "omega_matrix"),
            other => panic!("{other:?}"),
        }
        let unknown = format!("{CASE_STUDY_CFG}\nbogus = 1\n");
        let msg = ExperimentConfig::from_toml(&unknown, None)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("bogus"), "{msg}");
        let unsorted = CASE_STUDY_CFG.replace("[0.5, 1.0]", "[1.0, 0.5]");
        match ExperimentConfig::from_toml(&unsorted, None) {
            Err(BenchError::Config { key, .. }) => assert_eq!(key, "noise_levels"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_methods_give_header_only() {
        let cfg = ExperimentConfig::from_toml(
            &CASE_STUDY_CFG.replace(r#"methods = ["proposed", "nuclear_norm"]"#, "methods = []"),
            None,
        )
        .unwrap();
        let table = run_experiment(&cfg).unwrap();
        assert_eq!(table.to_csv(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn small_experiment_is_reproducible() {
        let cfg = ExperimentConfig::from_toml(CASE_STUDY_CFG, None).unwrap();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.rate(BenchMethod::Proposed, 0.5), Some(1.0));
        assert!(a.to_csv().lines().nth(1).unwrap().ends_with(",NA"));
        let gp = a.to_gnuplot();
        assert!(gp.starts_with("# proposed\n"));
        assert!(gp.contains("\n\n\n# nuclear_norm\n"));
    }
}
