//! Compressed sparse row matrix, just enough for reservoir dynamics:
//! construction from coordinates, matrix-vector products, uniform scaling.
//! Serialized as a coordinate list for reproducibility audits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Square-or-rectangular sparse matrix in CSR layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "CooDocument", into = "CooDocument")]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

/// Coordinate-list form used on the wire.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CooDocument {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl SparseMatrix {
    /// Build from (row, col, value) triplets. Triplets are sorted internally;
    /// duplicate positions must not occur.
    pub fn from_coo(n_rows: usize, n_cols: usize, mut entries: Vec<(u32, u32, f64)>) -> Self {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for &(r, c, v) in &entries {
            debug_assert!((r as usize) < n_rows && (c as usize) < n_cols);
            row_ptr[r as usize + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of structurally stored entries (zero values still count).
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x, overwriting `out`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(out.len(), self.n_rows);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            *o = acc;
        }
    }

    /// Multiply every stored value by `s`.
    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn to_coo(&self) -> Vec<(u32, u32, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r as u32, self.col_idx[k], self.values[k]));
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k] as usize)] = self.values[k];
            }
        }
        m
    }
}

impl From<CooDocument> for SparseMatrix {
    fn from(doc: CooDocument) -> Self {
        SparseMatrix::from_coo(doc.n_rows, doc.n_cols, doc.entries)
    }
}

impl From<SparseMatrix> for CooDocument {
    fn from(m: SparseMatrix) -> Self {
        CooDocument { n_rows: m.n_rows, n_cols: m.n_cols, entries: m.to_coo() }
    }
}
