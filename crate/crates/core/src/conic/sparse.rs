/// Compressed sparse row matrix; just enough for `A x`, `A^T y` and the
/// normal-equations product used by the ADMM factorization.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicate `(row, col)` pairs are summed; explicit zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        trips.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut values: Vec<f64> = Vec::with_capacity(trips.len());
        let mut rows_of: Vec<usize> = Vec::with_capacity(trips.len());
        for (i, j, v) in trips {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if let (Some(&li), Some(&lj)) = (rows_of.last(), col_idx.last()) {
                if li == i && lj == j {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows_of.push(i);
            col_idx.push(j);
            values.push(v);
        }
        let mut keep_rows = Vec::new();
        let mut keep_cols = Vec::new();
        let mut keep_vals = Vec::new();
        for ((i, j), v) in rows_of.into_iter().zip(col_idx).zip(values) {
            if v != 0.0 {
                keep_rows.push(i);
                keep_cols.push(j);
                keep_vals.push(v);
            }
        }
        for &i in &keep_rows {
            row_ptr[i + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx: keep_cols,
            values: keep_vals,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// `out = A x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `out = A^T y`
    pub fn mul_t_vec(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.nrows);
        debug_assert_eq!(out.len(), self.ncols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * yi;
                }
            }
        }
    }

    /// `D A E` for diagonal scalings given as vectors.
    pub fn scaled(&self, row_scale: &[f64], col_scale: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] *= row_scale[i] * col_scale[self.col_idx[k]];
            }
        }
        out
    }

    pub fn row_inf_norms(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.row(i).fold(0.0f64, |m, (_, v)| m.max(v.abs())))
            .collect()
    }

    pub fn col_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.ncols];
        for (_, j, v) in self.triplets() {
            out[j] = out[j].max(v.abs());
        }
        out
    }

    /// Dense column-major `A^T diag(w) A`.
    pub fn gram_weighted(&self, w: &[f64]) -> Vec<f64> {
        let n = self.ncols;
        let mut g = vec![0.0; n * n];
        for (i, &wi) in w.iter().enumerate() {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            for a in range.clone() {
                let (ja, va) = (self.col_idx[a], self.values[a] * wi);
                for b in range.clone() {
                    g[ja * n + self.col_idx[b]] += va * self.values[b];
                }
            }
        }
        g
    }
}
