//! Rank-one case study: certified radius, then recovery from a noisy
//! covariance inside and far outside that radius.
//!
//! ```bash
//! cargo run --release --example case_study
//! ```

use frisch_kalman::fk::{self, FkConfig, FkInstance, Variant};
use frisch_kalman::matrix::{DiagMatrix, SymMatrix};
use frisch_kalman::tightness::{membership_d_tilde, TightnessReport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let omega_hat = SymMatrix::outer(&[4.0, 2.0, 1.0]);
    let report = TightnessReport::analyze(&omega_hat)?;
    println!("rank            {}", report.r);
    println!("sigma_r         {:.4}", report.sigma_r);
    println!("||E^+||         {:.4}", report.e_pinv_norm());
    println!(
        "certified       {:.4}",
        report.certified_radius.unwrap_or(f64::NAN)
    );

    for norm in [2.0, 20.0] {
        let d = DiagMatrix::new(vec![1.0, 2.0, 3.0]);
        let delta = d.scale(norm / d.frobenius_norm());
        let sigma = &omega_hat + &delta.to_sym();
        let inside = membership_d_tilde(&report, &delta);
        let res = fk::solve(
            &FkInstance::new(sigma, Variant::FrischKalman)?,
            1,
            &FkConfig::default(),
        )?;
        let err = (&res.omega_star - &omega_hat).frobenius_norm() / omega_hat.frobenius_norm();
        println!();
        println!(
            "||Delta||_F = {norm}: certified = {inside}, r* = {}",
            res.r_star
        );
        println!("  Delta*     = {:.4?}", res.delta_star.values());
        println!("  rel error  = {err:.2e}");
        if let Some(v) = res.dual_value {
            println!("  dual value = {v:.6} (||Delta||_F^2 = {:.6})", norm * norm);
        }
    }
    Ok(())
}
