//! The proposed relaxation next to the nuclear-norm, r*-norm and log-det
//! heuristics on one random instance.
//!
//! ```bash
//! cargo run --release --example baselines
//! ```

use frisch_kalman::baselines::{
    default_logdet_delta, logdet_solve, nuclear_norm_solve, rstar_search, LOGDET_MAX_ITERS,
};
use frisch_kalman::bench::{gen_low_rank, gen_noise};
use frisch_kalman::conic::AdmmSolver;
use frisch_kalman::fk::{self, FkConfig, FkInstance, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, r) = (8, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sigma = &gen_low_rank(n, r, &mut rng) + &gen_noise(n, 0.1, &mut rng).to_sym();
    println!("planted rank {r}, n = {n}");

    let fk = fk::solve(
        &FkInstance::new(sigma.clone(), Variant::FrischKalman)?,
        1,
        &FkConfig::default(),
    )?;
    println!("{:<14} rank {}", "proposed", fk.r_star);

    let nn = nuclear_norm_solve(&sigma)?;
    println!(
        "{:<14} rank {}  tr(Sigma - Delta) = {:.4}",
        "nuclear_norm", nn.implied_rank, nn.objective
    );

    let rs = rstar_search(&sigma, r, &AdmmSolver::default())?;
    println!("{:<14} rank {}  ({})", "rstar", rs.implied_rank, rs.method);

    let ld = logdet_solve(&sigma, default_logdet_delta(&sigma), LOGDET_MAX_ITERS)?;
    println!(
        "{:<14} rank {}  after {} reweightings",
        "logdet", ld.implied_rank, ld.iterations
    );
    for (k, s) in ld.surrogate.iter().enumerate() {
        println!("  log det step {k}: {s:.6}");
    }
    Ok(())
}
