//! Dense and compressed-sparse-row matrices over `f64`.
//!
//! Both types are deliberately small: they carry exactly the kernels the
//! autoencoder needs (products, transposed products, elementwise updates).
//! Shape mismatches in the arithmetic helpers panic, the same way slice
//! indexing does; fallible construction goes through `Result`.

use std::fmt;

use crate::error::{ensure, Result};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix({}x{}) [", self.rows, self.cols)?;
        for r in 0..self.rows.min(6) {
            write!(f, "\n  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        if self.rows > 6 {
            write!(f, "\n  ...")?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    /// Builds a matrix from row-major values, rejecting non-finite entries.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        ensure!(
            values.len() == rows * cols,
            "dense matrix {rows}x{cols} needs {} values, got {}",
            rows * cols,
            values.len()
        );
        ensure!(
            values.iter().all(|v| v.is_finite()),
            "dense matrix contains non-finite values"
        );
        Ok(Self { rows, cols, values })
    }

    /// Builds without the finiteness scan; length is still checked.
    pub(crate) fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols, "dense matrix length mismatch");
        Self { rows, cols, values }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        ensure!(rows.iter().all(|r| r.len() == cols), "ragged rows in dense matrix");
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Column vector (n x 1).
    pub fn column(values: Vec<f64>) -> Self {
        let n = values.len();
        Self::from_vec(n, 1, values)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self { rows, cols, values }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same data, new shape.
    pub fn reshaped(mut self, rows: usize, cols: usize) -> Self {
        assert_eq!(rows * cols, self.values.len(), "reshape changes length");
        self.rows = rows;
        self.cols = cols;
        self
    }

    pub fn col_values(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols,
            other.rows,
            "matmul shape mismatch: {:?} x {:?}",
            self.shape(),
            other.shape()
        );
        let n = other.cols;
        let mut out = vec![0.0; self.rows * n];
        for r in 0..self.rows {
            let out_row = &mut out[r * n..(r + 1) * n];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Self::from_vec(self.rows, n, out)
    }

    /// `selfᵀ * other`.
    pub fn matmul_tn(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "matmul_tn shape mismatch");
        let (m, n) = (self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for k in 0..self.rows {
            let b_row = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out[i * n..(i + 1) * n].iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self::from_vec(m, n, out)
    }

    /// `self * otherᵀ`.
    pub fn matmul_nt(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_nt shape mismatch");
        Self::from_fn(self.rows, other.rows, |r, c| {
            self.row(r).iter().zip(other.row(c)).map(|(a, b)| a * b).sum()
        })
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "add shape mismatch");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Self::from_vec(self.rows, self.cols, values)
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "sub shape mismatch");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self::from_vec(self.rows, self.cols, values)
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(self.rows, self.cols, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "diff shape mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Compressed-sparse-row matrix with sorted, duplicate-free, nonzero entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Canonicalizes `(row, col, value)` triplets: duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, v) in &triplets {
            ensure!(r < rows && c < cols, "sparse entry ({r}, {c}) outside {rows}x{cols}");
            ensure!(v.is_finite(), "sparse entry ({r}, {c}) is not finite");
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|t| t.2 != 0.0);

        let mut row_ptr = vec![0usize; rows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col_idx = merged.iter().map(|t| t.1).collect();
        let values = merged.iter().map(|t| t.2).collect();
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Rebuilds from raw CSR arrays (used when deserializing).
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        ensure!(row_ptr.len() == rows + 1, "row_ptr length mismatch");
        ensure!(
            col_idx.len() == values.len() && row_ptr[rows] == values.len(),
            "CSR arrays disagree on nnz"
        );
        for r in 0..rows {
            ensure!(row_ptr[r] <= row_ptr[r + 1], "row_ptr not monotone");
            let cols_in_row = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            ensure!(
                cols_in_row.windows(2).all(|w| w[0] < w[1]),
                "row {r} columns not strictly increasing"
            );
            ensure!(
                cols_in_row.iter().all(|&c| c < cols),
                "column index out of bounds in row {r}"
            );
        }
        ensure!(
            values.iter().all(|v| v.is_finite() && *v != 0.0),
            "CSR values must be finite and nonzero"
        );
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All entries in canonical (row, col) order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(i) => self.values[span.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        let triplets = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.cols, self.rows, triplets).expect("transpose of valid matrix")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            d.set(r, c, v);
        }
        d
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.triplets().all(|(r, c, v)| self.get(c, r) == v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "sparse mul_vec length mismatch");
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `self * x` for dense `x`.
    pub fn mul_dense(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, x.rows(), "sparse·dense shape mismatch");
        let f = x.cols();
        let mut out = vec![0.0; self.rows * f];
        for r in 0..self.rows {
            let out_row = &mut out[r * f..(r + 1) * f];
            for (c, v) in self.row(r) {
                for (o, &xv) in out_row.iter_mut().zip(x.row(c)) {
                    *o += v * xv;
                }
            }
        }
        DenseMatrix::from_vec(self.rows, f, out)
    }

    /// `selfᵀ * y` without materializing the transpose.
    pub fn mul_dense_transposed(&self, y: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, y.rows(), "sparseᵀ·dense shape mismatch");
        let f = y.cols();
        let mut out = vec![0.0; self.cols * f];
        for r in 0..self.rows {
            let y_row = y.row(r);
            for (c, v) in self.row(r) {
                for (o, &yv) in out[c * f..(c + 1) * f].iter_mut().zip(y_row) {
                    *o += v * yv;
                }
            }
        }
        DenseMatrix::from_vec(self.cols, f, out)
    }

    /// Product of two sparse matrices.
    pub fn matmul(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.cols, other.rows, "sparse matmul shape mismatch");
        let mut triplets = Vec::new();
        let mut acc = vec![0.0; other.cols];
        let mut touched = Vec::new();
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if acc[c] == 0.0 {
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            touched.dedup();
            for &c in &touched {
                triplets.push((r, c, acc[c]));
                acc[c] = 0.0;
            }
            touched.clear();
        }
        SparseMatrix::from_triplets(self.rows, other.cols, triplets).expect("product of valid matrices")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_are_canonicalized() {
        let m = SparseMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 2, 3.0), (0, 0, 0.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 2), 4.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.triplets().collect::<Vec<_>>(), vec![(0, 1, 2.0), (1, 2, 4.0)]);
    }

    #[test]
    fn out_of_bounds_triplet_rejected() {
        assert!(SparseMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, vec![(0, 0, f64::NAN)]).is_err());
    }

    #[test]
    fn dense_new_rejects_bad_input() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = DenseMatrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 - 5.0);
        let b = DenseMatrix::from_fn(4, 2, |r, c| (r + 2 * c) as f64 * 0.5);
        assert_eq!(a.matmul_tn(&b), a.transpose().matmul(&b));
        let c = DenseMatrix::from_fn(5, 3, |r, c| (r as f64 - c as f64).sin());
        assert_eq!(a.matmul_nt(&c).max_abs_diff(&a.matmul(&c.transpose())), 0.0);
    }

    #[test]
    fn sparse_products_match_dense() {
        let s = SparseMatrix::from_triplets(3, 3, vec![(0, 0, 2.0), (0, 2, -1.0), (1, 1, 3.0), (2, 0, 0.5)]).unwrap();
        let x = DenseMatrix::from_fn(3, 2, |r, c| (r + c) as f64 + 1.0);
        let dense = s.to_dense();
        assert_eq!(s.mul_dense(&x), dense.matmul(&x));
        assert_eq!(s.mul_dense_transposed(&x), dense.transpose().matmul(&x));
        assert_eq!(s.matmul(&s).to_dense(), dense.matmul(&dense));
        assert_eq!(s.transpose().to_dense(), dense.transpose());
    }
}
