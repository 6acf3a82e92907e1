use nalgebra::{DMatrix, SymmetricEigen};

use super::problem::{svec_index, Cone, SQRT_2};

/// Euclidean projection of one cone block.
pub fn project_cone(block: &[f64], cone: Cone) -> Vec<f64> {
    assert_eq!(
        block.len(),
        cone.dim(),
        "block length does not match {cone:?}"
    );
    let mut out = block.to_vec();
    project_in_place(&mut out, cone);
    out
}

pub(crate) fn project_in_place(v: &mut [f64], cone: Cone) {
    match cone {
        Cone::Zero(_) => v.iter_mut().for_each(|x| *x = 0.0),
        Cone::NonNeg(_) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
        Cone::Psd(m) => project_psd(m, v),
    }
}

fn project_psd(m: usize, v: &mut [f64]) {
    if m == 1 {
        v[0] = v[0].max(0.0);
        return;
    }
    let mut x = DMatrix::zeros(m, m);
    for j in 0..m {
        x[(j, j)] = v[svec_index(m, j, j)];
        for i in (j + 1)..m {
            let e = v[svec_index(m, i, j)] / SQRT_2;
            x[(i, j)] = e;
            x[(j, i)] = e;
        }
    }
    let eig = SymmetricEigen::new(x);
    let neg = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    if neg == 0 {
        return;
    }
    if neg == m {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    // Sum over whichever eigen-side is smaller: X_+ = sum_{l>0} or X - sum_{l<0}.
    let keep_positive = m - neg <= neg;
    let mut acc = DMatrix::<f64>::zeros(m, m);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if (keep_positive && l > 0.0) || (!keep_positive && l < 0.0) {
            let u = eig.eigenvectors.column(k);
            acc.ger(l, &u, &u, 1.0);
        }
    }
    for j in 0..m {
        for i in j..m {
            let k = svec_index(m, i, j);
            let scale = if i == j { 1.0 } else { SQRT_2 };
            let e = 0.5 * (acc[(i, j)] + acc[(j, i)]) * scale;
            if keep_positive {
                v[k] = e;
            } else {
                v[k] -= e;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::problem::svec;

    #[test]
    fn psd_clamps_negative_eigenvalues() {
        let p = project_cone(&svec(2, &[1.0, 0.0, 0.0, -2.0]), Cone::Psd(2));
        assert_eq!(p, svec(2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn nonneg_and_zero() {
        assert_eq!(project_cone(&[-1.0, 3.0], Cone::NonNeg(2)), vec![0.0, 3.0]);
        assert_eq!(project_cone(&[-1.0, 3.0], Cone::Zero(2)), vec![0.0, 0.0]);
    }

    #[test]
    fn psd_member_unchanged() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0];
        let v = svec(3, &a);
        let p = project_cone(&v, Cone::Psd(3));
        for (x, y) in v.iter().zip(&p) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_sign_projection_both_branches() {
        // two negative, one positive and the reverse
        for a in [
            [1.0, 2.0, 0.0, 2.0, -3.0, 1.0, 0.0, 1.0, -4.0],
            [-1.0, 2.0, 0.0, 2.0, 3.0, 1.0, 0.0, 1.0, 4.0],
        ] {
            let v = svec(3, &a);
            let p = project_cone(&v, Cone::Psd(3));
            let again = project_cone(&p, Cone::Psd(3));
            for (x, y) in p.iter().zip(&again) {
                assert!((x - y).abs() < 1e-12);
            }
            // residual v - p is negative semidefinite and orthogonal to p
            let r: Vec<f64> = v.iter().zip(&p).map(|(a, b)| a - b).collect();
            let dot: f64 = r.iter().zip(&p).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-10);
            let neg = project_cone(&r.iter().map(|x| -x).collect::<Vec<_>>(), Cone::Psd(3));
            let diff: f64 = neg.iter().zip(&r).map(|(a, b)| (a + b).abs()).sum();
            assert!(diff < 1e-10);
        }
    }
}
