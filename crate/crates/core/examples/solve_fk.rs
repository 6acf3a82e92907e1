//! Solve a matrix file with the rank search, both variants.
//!
//! ```bash
//! cargo run --release --example solve_fk -- path/to/sigma.txt
//! ```
//!
//! Without an argument a random `n = 6`, rank-2 instance is drawn.

use frisch_kalman::bench::{gen_low_rank, gen_noise};
use frisch_kalman::fk::{self, FkConfig, FkInstance, Variant};
use frisch_kalman::matrix::read_matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let sigma = match std::env::args().nth(1) {
        Some(path) => read_matrix(path)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            &gen_low_rank(6, 2, &mut rng) + &gen_noise(6, 0.05, &mut rng).to_sym()
        }
    };
    for variant in [Variant::FrischKalman, Variant::Shapiro] {
        let res = fk::solve(
            &FkInstance::new(sigma.clone(), variant)?,
            1,
            &FkConfig::default(),
        )?;
        println!("# {variant}");
        print!("{}", res.to_key_values());
        println!();
    }
    Ok(())
}
