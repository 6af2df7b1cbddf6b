//! Compressed sparse rows for encoder outputs that are mostly zero: one-hot
//! token rows and zero-padded patch rows.

use ndarray::{Array2, ArrayView2};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_dense(m: ArrayView2<f64>) -> Self {
        let (rows, cols) = m.dim();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in m.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        self.for_each(|i, j, v| out[[i, j]] = v);
        out
    }

    fn for_each(&self, mut f: impl FnMut(usize, usize, f64)) {
        for i in 0..self.rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                f(i, self.col_idx[k], self.vals[k]);
            }
        }
    }

    /// `self · w`.
    pub fn dot(&self, w: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.cols, w.nrows(), "sparse product shape mismatch");
        let mut out = Array2::zeros((self.rows, w.ncols()));
        self.for_each(|i, j, v| out.row_mut(i).scaled_add(v, &w.row(j)));
        out
    }

    /// `acc += selfᵀ · d`.
    pub fn t_dot_acc(&self, d: &Array2<f64>, acc: &mut Array2<f64>) {
        assert_eq!(self.rows, d.nrows(), "sparse product shape mismatch");
        assert_eq!(acc.dim(), (self.cols, d.ncols()), "sparse accumulator shape mismatch");
        self.for_each(|i, j, v| acc.row_mut(j).scaled_add(v, &d.row(i)));
    }
}
