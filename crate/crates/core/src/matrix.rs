//! Dense and sparse row storage shared by the featurizers and the models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse vector with strictly increasing indices and non-zero finite weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Build from `(index, value)` pairs. Pairs may arrive unsorted; zero
    /// values are dropped and duplicate indices are rejected.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|&(i, _)| i);
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values = Vec::with_capacity(pairs.len());
        let mut last = None;
        for (i, v) in pairs {
            if i >= dim {
                return Err(Error::invalid(format!("index {i} outside dimension {dim}")));
            }
            if last == Some(i) {
                return Err(Error::invalid(format!("duplicate index {i}")));
            }
            last = Some(i);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("sparse entry {i}")));
            }
            if v != 0.0 {
                indices.push(i as u32);
                values.push(v);
            }
        }
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let mut out = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 {
                out.indices.push(i as u32);
                out.values.push(v);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(p) => self.values[p],
            Err(_) => 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub(crate) fn scale_in_place(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Copy of the entries in `[start, end)`, re-indexed from zero.
    pub fn slice(&self, start: usize, end: usize) -> SparseVector {
        let mut out = SparseVector::zeros(end - start);
        for (i, v) in self.iter() {
            if i >= start && i < end {
                out.indices.push((i - start) as u32);
                out.values.push(v);
            }
        }
        out
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// The encoded structured block.
pub type FeatureMatrix = DenseMatrix;

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        DenseMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Compressed sparse row matrix; the common input format of every model
/// that consumes fused features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn empty(n_cols: usize) -> Self {
        Self {
            n_cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_sparse_rows(n_cols: usize, rows: &[SparseVector]) -> Result<Self> {
        let mut m = Self::empty(n_cols);
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::empty(n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    found: r.len(),
                });
            }
            m.push_row(&SparseVector::from_dense(r))?;
        }
        Ok(m)
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut out = Self::empty(m.cols());
        for r in 0..m.rows() {
            out.push_row(&SparseVector::from_dense(m.row(r)))
                .expect("row width equals matrix width");
        }
        out
    }

    pub fn push_row(&mut self, row: &SparseVector) -> Result<()> {
        if row.dim() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                found: row.dim(),
            });
        }
        self.indices.extend_from_slice(row.indices());
        self.values.extend_from_slice(row.values());
        self.indptr.push(self.indices.len());
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_indices(&self, r: usize) -> &[u32] {
        &self.indices[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn row_values(&self, r: usize) -> &[f64] {
        &self.values[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn row_iter(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_indices(r)
            .iter()
            .zip(self.row_values(r))
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn row(&self, r: usize) -> SparseVector {
        SparseVector {
            dim: self.n_cols,
            indices: self.row_indices(r).to_vec(),
            values: self.row_values(r).to_vec(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let idx = self.row_indices(r);
        match idx.binary_search(&(c as u32)) {
            Ok(p) => self.row_values(r)[p],
            Err(_) => 0.0,
        }
    }

    pub fn row_dot(&self, r: usize, w: &[f64]) -> f64 {
        self.row_iter(r).map(|(i, v)| v * w[i]).sum()
    }

    pub fn row_to_dense(&self, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for (i, v) in self.row_iter(r) {
            out[i] = v;
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> CsrMatrix {
        let mut out = CsrMatrix::empty(self.n_cols);
        for &r in idx {
            out.indices.extend_from_slice(self.row_indices(r));
            out.values.extend_from_slice(self.row_values(r));
            out.indptr.push(out.indices.len());
        }
        out
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(p) = self.values.iter().position(|v| !v.is_finite()) {
            let row = self.indptr.partition_point(|&s| s <= p) - 1;
            return Err(Error::NonFinite(format!("feature row {row}")));
        }
        Ok(())
    }

    pub fn to_csc(&self) -> CscMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let colptr = counts.clone();
        let mut next = counts;
        let mut rows = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows() {
            for (c, v) in self.row_iter(r) {
                let p = next[c];
                rows[p] = r as u32;
                values[p] = v;
                next[c] += 1;
            }
        }
        CscMatrix {
            n_rows: self.n_rows(),
            colptr,
            rows,
            values,
        }
    }
}

/// Column-compressed view, built on demand by column-wise solvers.
#[derive(Debug, Clone)]
pub struct CscMatrix {
    n_rows: usize,
    colptr: Vec<usize>,
    rows: Vec<u32>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.colptr.len() - 1
    }

    pub fn col_nnz(&self, c: usize) -> usize {
        self.colptr[c + 1] - self.colptr[c]
    }

    pub fn col_iter(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + Clone + '_ {
        let span = self.colptr[c]..self.colptr[c + 1];
        self.rows[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&r, &v)| (r as usize, v))
    }
}
