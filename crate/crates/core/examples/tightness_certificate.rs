//! Dual certificates: build one for a perturbation inside the certified
//! ball, check it independently, and draw a certified witness.
//!
//! ```bash
//! cargo run --release --example tightness_certificate
//! ```

use frisch_kalman::matrix::{DiagMatrix, SymMatrix};
use frisch_kalman::tightness::{
    certificate_check, construct_lambda, membership_d_tilde, nonempty_witness, TightnessReport,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let omega_hat = SymMatrix::outer(&[4.0, 2.0, 1.0]);
    let report = TightnessReport::analyze(&omega_hat)?;
    let radius = report.certified_radius.expect("rank-deficient");
    println!(
        "certified radius {radius:.4}, sigma_r {:.4}",
        report.sigma_r
    );
    // The ball is sufficient, not necessary: certificates often exist outside it.

    for scale in [0.5, 0.99, 1.5] {
        let d = DiagMatrix::new(vec![1.0, 1.0, 1.0]);
        let delta = d.scale(scale * radius / d.frobenius_norm());
        let cert = construct_lambda(&report, &delta)?;
        println!(
            "||Delta||_F = {:.3}: in ball {}, ||Delta + Lambda|| = {:.4}, certificate {}",
            delta.frobenius_norm(),
            membership_d_tilde(&report, &delta),
            cert.norm_check,
            certificate_check(&omega_hat, &cert)?,
        );
    }

    let w = nonempty_witness(&omega_hat)?;
    println!();
    println!("witness v     {:.4?}", w.v.as_slice());
    println!("witness Delta {:.4?}", w.delta.values());
    println!(
        "certified {}, Sigma positive definite {}",
        w.certified, w.sigma_pd
    );
    Ok(())
}
