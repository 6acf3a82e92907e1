//! Success rate of the proposed method on the rank-one case study as the
//! noise grows past the certified radius.
//!
//! ```bash
//! cargo run --release --example noise_sweep [-- config.toml]
//! ```

use std::path::PathBuf;

use frisch_kalman::bench::{run_experiment, BenchMethod, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/case_study_sweep.toml")
        });
    let cfg = ExperimentConfig::load(&path)?;
    let table = run_experiment(&cfg)?;
    print!("{}", table.to_csv());
    eprintln!();
    for row in table
        .rows
        .iter()
        .filter(|r| r.method == BenchMethod::Proposed)
    {
        let bar = "#".repeat((row.success_rate() * 40.0).round() as usize);
        eprintln!("{:>6} {bar}", row.noise_frob);
    }
    Ok(())
}
