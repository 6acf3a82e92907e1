//! All four methods on random rank-5 covariances of size 10. Takes a few
//! minutes in release mode; pass a smaller trial count to shorten it.
//!
//! ```bash
//! cargo run --release --example random_sweep [-- trials]
//! ```

use std::path::PathBuf;

use frisch_kalman::bench::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/random_sweep.toml");
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(t) = std::env::args().nth(1) {
        cfg.trials = t.parse()?;
    }
    let table = run_experiment(&cfg)?;
    print!("{}", table.to_csv());
    eprint!("{}", table.to_gnuplot());
    Ok(())
}
