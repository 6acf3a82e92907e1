//! Matrix toolkit: eigen-decomposition, best rank-r approximation and the
//! norms used throughout.
//!
//! ```bash
//! cargo run --release --example spectral
//! ```

use frisch_kalman::matrix::{
    ky_fan_norm, numerical_rank, off_diag, r_norm, singular_values, svd_truncate, SymMatrix,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = SymMatrix::from_rows(&[
        vec![4.0, 1.0, 0.5, 0.0],
        vec![1.0, -3.0, 0.2, 0.1],
        vec![0.5, 0.2, 2.0, -0.4],
        vec![0.0, 0.1, -0.4, 1.0],
    ])?;
    let s = singular_values(&a)?;
    println!("singular values {s:.4?}");
    for r in 1..=a.n() {
        let t = svd_truncate(&a, r)?;
        let err = (&a - &t).frobenius_norm();
        let tail = s[r..].iter().map(|x| x * x).sum::<f64>().sqrt();
        println!(
            "r = {r}: rank {} error {err:.6} tail {tail:.6} r-norm {:.4} Ky Fan {:.4}",
            numerical_rank(&t)?,
            r_norm(&a, r)?,
            ky_fan_norm(&a, r)?,
        );
    }
    println!(
        "off_diag(I) = 0: {}",
        off_diag(&SymMatrix::identity(4)).frobenius_norm() == 0.0
    );
    Ok(())
}
