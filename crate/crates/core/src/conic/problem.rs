use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::sparse::CsrMatrix;
use super::ConicError;

pub(crate) const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// One block of the product cone that the slack vector lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    /// `{0}^k`: equality rows.
    Zero(usize),
    /// Nonnegative orthant of dimension `k`.
    NonNeg(usize),
    /// PSD cone of `m x m` symmetric matrices, scalarized with [`svec`].
    Psd(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(k) | Cone::NonNeg(k) => k,
            Cone::Psd(m) => m * (m + 1) / 2,
        }
    }
}

/// Position of entry `(i, j)` of an `m x m` symmetric matrix in its
/// scalarization. Lower triangle, column-major.
pub fn svec_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    debug_assert!(i < m);
    j * m - j * j.saturating_sub(1) / 2 + (i - j)
}

/// Scalarize a symmetric matrix given as a dense column-major slice.
///
/// Off-diagonal entries are multiplied by `sqrt(2)` so that
/// `svec(A) . svec(B) = tr(A^T B)`.
pub fn svec(m: usize, dense: &[f64]) -> Vec<f64> {
    assert_eq!(dense.len(), m * m);
    let mut out = Vec::with_capacity(m * (m + 1) / 2);
    for j in 0..m {
        out.push(dense[j * m + j]);
        for i in (j + 1)..m {
            out.push(SQRT_2 * 0.5 * (dense[j * m + i] + dense[i * m + j]));
        }
    }
    out
}

/// Inverse of [`svec`]; returns a dense column-major `m x m` slice.
pub fn smat(m: usize, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), m * (m + 1) / 2);
    let mut out = vec![0.0; m * m];
    let mut k = 0;
    for j in 0..m {
        out[j * m + j] = v[k];
        k += 1;
        for i in (j + 1)..m {
            let x = v[k] / SQRT_2;
            out[j * m + i] = x;
            out[i * m + j] = x;
            k += 1;
        }
    }
    out
}

/// Standard-form conic program
///
/// ```text
/// minimize    c^T x + offset
/// subject to  A x + s = b,   s in K = K_1 x ... x K_p
/// ```
///
/// with `x` free. Build instances with [`ProblemBuilder`].
#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub c: Vec<f64>,
    pub objective_offset: f64,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl SdpProblem {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let rows: usize = self.cones.iter().map(Cone::dim).sum();
        if rows != self.b.len() {
            return Err(ConicError::Dimension(format!(
                "cone blocks cover {rows} rows but b has {}",
                self.b.len()
            )));
        }
        if self.a.nrows() != self.b.len() || self.a.ncols() != self.c.len() {
            return Err(ConicError::Dimension(format!(
                "A is {}x{}, expected {}x{}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.len(),
                self.c.len()
            )));
        }
        if let Some(bad) = self.cones.iter().find(|c| c.dim() == 0) {
            return Err(ConicError::Dimension(format!("empty cone block {bad:?}")));
        }
        Ok(())
    }

    /// Plain-text listing: objective, constraint triplets, cone tags.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        writeln!(out, "vars {}", self.num_vars()).unwrap();
        writeln!(out, "rows {}", self.num_rows()).unwrap();
        writeln!(out, "offset {:e}", self.objective_offset).unwrap();
        for (j, &cj) in self.c.iter().enumerate() {
            if cj != 0.0 {
                writeln!(out, "c {j} {cj:e}").unwrap();
            }
        }
        for (i, j, v) in self.a.triplets() {
            writeln!(out, "A {i} {j} {v:e}").unwrap();
        }
        for (i, &bi) in self.b.iter().enumerate() {
            if bi != 0.0 {
                writeln!(out, "b {i} {bi:e}").unwrap();
            }
        }
        for cone in &self.cones {
            match cone {
                Cone::Zero(k) => writeln!(out, "cone zero {k}").unwrap(),
                Cone::NonNeg(k) => writeln!(out, "cone nonneg {k}").unwrap(),
                Cone::Psd(m) => writeln!(out, "cone psd {m}").unwrap(),
            }
        }
        out
    }
}

/// Handle to a cone block added to a [`ProblemBuilder`].
#[derive(Clone, Copy, Debug)]
pub struct Block {
    start: usize,
    cone: Cone,
}

impl Block {
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn cone(&self) -> Cone {
        self.cone
    }
}

/// Assembles an [`SdpProblem`] by describing each slack as an affine
/// function of the variables, `s = s0 + sum_k coef_k x_k`.
#[derive(Debug)]
pub struct ProblemBuilder {
    c: Vec<f64>,
    offset: f64,
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    cones: Vec<Cone>,
}

impl ProblemBuilder {
    pub fn new(num_vars: usize) -> Self {
        ProblemBuilder {
            c: vec![0.0; num_vars],
            offset: 0.0,
            triplets: Vec::new(),
            b: Vec::new(),
            cones: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn cost(&mut self, var: usize, value: f64) -> &mut Self {
        self.c[var] += value;
        self
    }

    pub fn offset(&mut self, value: f64) -> &mut Self {
        self.offset += value;
        self
    }

    pub fn block(&mut self, cone: Cone) -> Block {
        let start = self.b.len();
        self.b.resize(start + cone.dim(), 0.0);
        self.cones.push(cone);
        Block { start, cone }
    }

    /// Adds `value` to the constant part of slack row `k` of the block.
    pub fn constant(&mut self, block: Block, k: usize, value: f64) -> &mut Self {
        assert!(k < block.cone.dim());
        self.b[block.start + k] += value;
        self
    }

    /// Adds `coef * x_var` to slack row `k` of the block.
    pub fn term(&mut self, block: Block, k: usize, var: usize, coef: f64) -> &mut Self {
        assert!(k < block.cone.dim() && var < self.c.len());
        // s = b - A x
        self.triplets.push((block.start + k, var, -coef));
        self
    }

    fn psd_row(block: Block, i: usize, j: usize) -> (usize, f64) {
        let Cone::Psd(m) = block.cone else {
            panic!("matrix entry addressed on non-PSD block {:?}", block.cone)
        };
        assert!(i < m && j < m);
        let scale = if i == j { 1.0 } else { SQRT_2 };
        (svec_index(m, i, j), scale)
    }

    /// Adds `value` to entries `(i, j)` and `(j, i)` of the constant part
    /// of a PSD block's slack matrix.
    pub fn matrix_constant(&mut self, block: Block, i: usize, j: usize, value: f64) -> &mut Self {
        let (k, scale) = Self::psd_row(block, i, j);
        self.constant(block, k, scale * value)
    }

    /// Adds `coef * x_var` to entries `(i, j)` and `(j, i)` of a PSD
    /// block's slack matrix.
    pub fn matrix_term(
        &mut self,
        block: Block,
        i: usize,
        j: usize,
        var: usize,
        coef: f64,
    ) -> &mut Self {
        let (k, scale) = Self::psd_row(block, i, j);
        self.term(block, k, var, scale * coef)
    }

    pub fn build(self) -> SdpProblem {
        let rows = self.b.len();
        let cols = self.c.len();
        SdpProblem {
            c: self.c,
            objective_offset: self.offset,
            a: CsrMatrix::from_triplets(rows, cols, self.triplets),
            b: self.b,
            cones: self.cones,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_index_matches_layout() {
        let m = 4;
        let mut seen = vec![false; m * (m + 1) / 2];
        let mut k = 0;
        for j in 0..m {
            for i in j..m {
                assert_eq!(svec_index(m, i, j), k);
                assert_eq!(svec_index(m, j, i), k);
                seen[k] = true;
                k += 1;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn smat_inverts_svec() {
        let dense = vec![1.0, 2.0, 3.0, 2.0, 5.0, 6.0, 3.0, 6.0, 9.0];
        assert_eq!(smat(3, &svec(3, &dense)), dense);
    }

    #[test]
    fn builder_places_entries() {
        let mut bld = ProblemBuilder::new(2);
        bld.cost(0, 1.0);
        let nn = bld.block(Cone::NonNeg(1));
        bld.term(nn, 0, 1, 2.0).constant(nn, 0, -1.0);
        let psd = bld.block(Cone::Psd(2));
        bld.matrix_term(psd, 1, 0, 0, 1.0);
        bld.matrix_constant(psd, 1, 1, 3.0);
        let p = bld.build();
        p.validate().unwrap();
        assert_eq!(p.b, vec![-1.0, 0.0, 0.0, 3.0]);
        let trips: Vec<_> = p.a.triplets().collect();
        assert_eq!(trips, vec![(0, 1, -2.0), (2, 0, -SQRT_2)]);
        assert!(p.listing().contains("cone psd 2"));
    }
}
