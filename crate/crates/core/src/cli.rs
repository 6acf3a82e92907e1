//! Command-line front end. `run` takes the argument list and output streams
//! so it can be driven from tests; the `fk` binary is a thin wrapper.
//!
//! Exit codes: 0 success, 1 bad input, 2 solver failure. Results go to
//! stdout as `key=value` lines, diagnostics to stderr.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{self, BaselineError, HeuristicResult};
use crate::bench::{self, BenchError, ExperimentConfig, OmegaSource};
use crate::conic::{AdmmSolver, SolverConfig};
use crate::fk::{self, FkConfig, FkError, FkInstance, Variant};
use crate::matrix::{read_matrix, write_matrix, MatrixError};
use crate::report::KeyValues;
use crate::tightness::{TightnessError, TightnessReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BAD_INPUT: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "fk", version, about = "Frisch-Kalman rank minimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decompose a covariance matrix into low-rank plus diagonal.
    Solve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "fk")]
        variant: Variant,
        #[arg(long, default_value_t = 1)]
        r_init: usize,
        #[arg(long, value_enum, default_value_t = SolveMethod::Proposed)]
        method: SolveMethod,
        /// Norm rank for `--method rstar`; searched over 1..n-1 when absent.
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Write a JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Certified tightness radius of a low-rank PSD matrix.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Draw a random instance and write sigma.txt, omega_hat.txt, delta.txt.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a success-rate experiment from a TOML config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        gnuplot: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolveMethod {
    Proposed,
    Nuclear,
    Rstar,
    Logdet,
}

struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn input(msg: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_BAD_INPUT,
            msg: msg.to_string(),
        }
    }

    fn solver(msg: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_SOLVER,
            msg: msg.to_string(),
        }
    }
}

impl From<MatrixError> for Failure {
    fn from(e: MatrixError) -> Self {
        match e {
            MatrixError::NoConvergence { .. } => Failure::solver(e),
            _ => Failure::input(e),
        }
    }
}

impl From<FkError> for Failure {
    fn from(e: FkError) -> Self {
        match e {
            FkError::Matrix(m) => m.into(),
            FkError::Conic(_) | FkError::Infeasible(_) => Failure::solver(e),
            _ => Failure::input(e),
        }
    }
}

impl From<BaselineError> for Failure {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Matrix(m) => m.into(),
            BaselineError::Conic(_) | BaselineError::Solver { .. } => Failure::solver(e),
            _ => Failure::input(e),
        }
    }
}

impl From<TightnessError> for Failure {
    fn from(e: TightnessError) -> Self {
        match e {
            TightnessError::Matrix(m) => m.into(),
            _ => Failure::input(e),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Matrix(m) => m.into(),
            _ => Failure::input(e),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_BAD_INPUT
            } else {
                EXIT_OK
            };
            let stream: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(stream, "{}", e.render());
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.msg);
            f.code
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Solve {
            input,
            variant,
            r_init,
            method,
            rank,
            tol,
            report,
        } => solve(
            &input,
            variant,
            r_init,
            method,
            rank,
            tol,
            report.as_deref(),
            out,
        ),
        Command::Analyze { input, report } => analyze(&input, report.as_deref(), out),
        Command::Gen {
            n,
            r,
            noise,
            seed,
            out: dir,
        } => gen(n, r, noise, seed, &dir, out),
        Command::Bench {
            config,
            out: csv,
            gnuplot,
        } => run_bench(&config, csv.as_deref(), gnuplot.as_deref(), out, err),
    }
}

fn emit(out: &mut dyn Write, kv: &KeyValues) -> Result<(), Failure> {
    write!(out, "{kv}").map_err(Failure::input)
}

fn write_report(path: Option<&Path>, json: &str) -> Result<(), Failure> {
    match path {
        Some(p) => {
            std::fs::write(p, json).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
        }
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn solve(
    input: &Path,
    variant: Variant,
    r_init: usize,
    method: SolveMethod,
    rank: Option<usize>,
    tol: f64,
    report: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let sigma = read_matrix(input)?;
    let solver = SolverConfig {
        tol,
        ..SolverConfig::default()
    };
    solver
        .validate()
        .map_err(|e| Failure::input(format!("--tol: {e}")))?;
    let engine = AdmmSolver::new(solver.clone());
    if method == SolveMethod::Proposed {
        let instance = FkInstance::new(sigma, variant)?;
        let cfg = FkConfig {
            solver,
            ..FkConfig::default()
        };
        let result = fk::solve_with(&instance, r_init, &cfg, &engine)?;
        emit(out, &result.to_key_values())?;
        return write_report(report, &result.to_json());
    }
    if variant != Variant::FrischKalman {
        return Err(Failure::input(
            "--variant shapiro applies only to --method proposed",
        ));
    }
    let result: HeuristicResult = match method {
        SolveMethod::Nuclear => baselines::nuclear_norm_solve_with(&sigma, &engine)?,
        SolveMethod::Rstar => match rank {
            Some(r) => baselines::rstar_solve_with(&sigma, r, &engine)?,
            None => baselines::rstar_search(&sigma, sigma.n().saturating_sub(1).max(1), &engine)?,
        },
        SolveMethod::Logdet => baselines::logdet_solve_with(
            &sigma,
            baselines::default_logdet_delta(&sigma),
            baselines::LOGDET_MAX_ITERS,
            &engine,
        )?,
        SolveMethod::Proposed => unreachable!(),
    };
    let mut kv = KeyValues::new();
    kv.push("r_star", result.implied_rank);
    for (k, v) in result.to_key_values().entries() {
        kv.push(k.clone(), v);
    }
    emit(out, &kv)?;
    write_report(
        report,
        &serde_json::to_string_pretty(&result).expect("serializable"),
    )
}

fn analyze(input: &Path, report: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    let omega = read_matrix(input)?;
    let rep = TightnessReport::analyze(&omega)?;
    emit(out, &rep.to_key_values())?;
    write_report(report, &rep.to_json())
}

fn gen(
    n: usize,
    r: usize,
    noise: f64,
    seed: u64,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let cfg = ExperimentConfig {
        n,
        r,
        noise_levels: vec![noise],
        trials: 1,
        methods: Vec::new(),
        seed,
        omega_source: OmegaSource::Random,
        timing: false,
        solver: SolverConfig::default(),
    };
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (omega, delta, sigma) = bench::draw_instance(&cfg, noise, &mut rng)?
        .ok_or_else(|| Failure::input("no positive definite draw; try another seed"))?;
    std::fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    let mut kv = KeyValues::new();
    for (name, m) in [
        ("sigma", sigma),
        ("omega_hat", omega),
        ("delta", delta.to_sym()),
    ] {
        let path = dir.join(format!("{name}.txt"));
        write_matrix(&path, &m)?;
        kv.push(name, path.display());
    }
    emit(out, &kv)
}

fn run_bench(
    config: &Path,
    csv: Option<&Path>,
    gnuplot: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config)?;
    let table = bench::run_experiment(&cfg)?;
    match csv {
        Some(p) => table.export(p)?,
        None => write!(out, "{}", table.to_csv()).map_err(Failure::input)?,
    }
    if let Some(p) = gnuplot {
        table.export_gnuplot(p)?;
    }
    let skipped: usize = table.rows.iter().map(|r| r.skipped).sum();
    let _ = writeln!(
        err,
        "{} rows, {skipped} skipped trial slots",
        table.rows.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("fk").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    fn write(dir: &Path, name: &str, text: &str) -> String {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p.display().to_string()
    }

    #[test]
    fn asymmetric_input_is_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "a.txt", "2\n1 2\n3 1\n");
        let (code, _, err) = call(&["solve", "--input", &f]);
        assert_eq!(code, EXIT_BAD_INPUT);
        assert!(err.contains("not symmetric"), "{err}");
    }

    #[test]
    fn diagonal_input_has_rank_zero() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "d.txt", "3\n1 0 0\n0 2 0\n0 0 3\n");
        let (code, out, _) = call(&["solve", "--input", &f]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(KeyValues::parse(&out).get("r_star"), Some("0"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(call(&["solve"]).0, EXIT_BAD_INPUT);
        assert_eq!(call(&["frobnicate"]).0, EXIT_BAD_INPUT);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn identity_radius_not_applicable() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "i.txt", "2\n1 0\n0 1\n");
        let (code, out, _) = call(&["analyze", "--input", &f]);
        assert_eq!(code, EXIT_OK);
        let kv = KeyValues::parse(&out);
        assert_eq!(kv.get("r"), Some("2"));
        assert_eq!(kv.get("kernel_dim"), Some("0"));
        assert_eq!(kv.get("certified_radius"), Some("NA"));
    }

    #[test]
    fn non_psd_analyze_is_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "n.txt", "2\n1 0\n0 -1\n");
        assert_eq!(call(&["analyze", "--input", &f]).0, EXIT_BAD_INPUT);
    }

    #[test]
    fn shapiro_rejected_for_baselines() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "s.txt", "2\n2 1\n1 2\n");
        let (code, _, _) = call(&[
            "solve",
            "--input",
            &f,
            "--method",
            "nuclear",
            "--variant",
            "shapiro",
        ]);
        assert_eq!(code, EXIT_BAD_INPUT);
    }
}
