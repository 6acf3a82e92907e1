//! Using the conic layer directly: the smallest eigenvalue of a symmetric
//! matrix as `max t  s.t.  A - t I >= 0`.
//!
//! ```bash
//! cargo run --release --example conic_sdp
//! ```

use frisch_kalman::conic::{solve, Cone, ProblemBuilder, SolverConfig};
use frisch_kalman::matrix::{eig_sym, SymMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = SymMatrix::from_rows(&[
        vec![2.0, -1.0, 0.0],
        vec![-1.0, 2.0, -1.0],
        vec![0.0, -1.0, 2.0],
    ])?;
    let n = a.n();
    // One variable t; the PSD slack is A - t I, and matrix_term adds coef * t to it.
    let mut b = ProblemBuilder::new(1);
    b.cost(0, -1.0);
    let psd = b.block(Cone::Psd(n));
    for j in 0..n {
        for i in j..n {
            b.matrix_constant(psd, i, j, a.get(i, j));
        }
        b.matrix_term(psd, j, j, 0, -1.0);
    }
    let p = b.build();
    print!("{}", p.listing());
    let sol = solve(&p, &SolverConfig::default())?;
    println!("status      {}", sol.status);
    println!("iterations  {}", sol.iterations);
    println!("t*          {:.10}", sol.x[0]);
    println!("lambda_min  {:.10}", eig_sym(&a)?.min_eigenvalue());
    Ok(())
}
