//! Compressed-sparse-row matrices.
//!
//! Adjacency matrices are never learnable, so the only products needed are
//! `A * B` and `A^T * B` with a dense right-hand side.

use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// How repeated `(row, col)` entries are combined when building from triplets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Duplicates {
    /// Keep a single entry; the value of the first occurrence wins.
    Collapse,
    Sum,
}

impl SparseMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
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

    /// Validating constructor for raw CSR arrays.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 {
            return Err(Error::Shape(format!(
                "row pointer array of length {} for {rows} rows",
                row_ptr.len()
            )));
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::Shape(format!(
                "{} column indices, {} values, row pointer end {}",
                col_idx.len(),
                values.len(),
                row_ptr[rows]
            )));
        }
        for i in 0..rows {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::Shape(format!("row pointer decreases at row {i}")));
            }
            let cols_in_row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols_in_row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Shape(format!(
                    "column indices of row {i} are not strictly increasing"
                )));
            }
            if let Some(&c) = cols_in_row.last() {
                if c >= cols {
                    return Err(Error::Shape(format!(
                        "column index {c} out of bounds for {cols} columns"
                    )));
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite sparse value".into()));
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
        duplicates: Duplicates,
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::Shape(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1, k));

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = triplets[k];
            if last == Some((r, c)) {
                if duplicates == Duplicates::Sum {
                    *values.last_mut().unwrap() += v;
                }
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::from_csr(rows, cols, row_ptr, col_idx, values)
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut triplets = Vec::new();
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), &triplets, Duplicates::Sum)
            .expect("dense source is well-formed")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (j, i, v))
            .collect();
        Self::from_triplets(self.cols, self.rows, &t, Duplicates::Sum)
            .expect("transpose of a valid matrix is valid")
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    /// Scale each row `i` by `factors[i]`.
    pub fn scale_rows(&self, factors: &[f64]) -> Self {
        assert_eq!(factors.len(), self.rows);
        let mut out = self.clone();
        for (i, f) in factors.iter().enumerate() {
            for v in &mut out.values[self.row_ptr[i]..self.row_ptr[i + 1]] {
                *v *= f;
            }
        }
        out
    }

    /// Entrywise sum of matrices with identical shape.
    pub fn sum_of(mats: &[&SparseMatrix], duplicates: Duplicates) -> Result<Self> {
        let Some(first) = mats.first() else {
            return Err(Error::Shape("sum of zero matrices".into()));
        };
        let mut triplets = Vec::new();
        for m in mats {
            if m.shape() != first.shape() {
                return Err(Error::shape_pair("sparse sum", first.shape(), m.shape()));
            }
            triplets.extend(m.triplets());
        }
        Self::from_triplets(first.rows, first.cols, &triplets, duplicates)
    }

    pub fn matmul_dense(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = DenseMatrix::zeros(self.rows, b.cols());
        self.matmul_dense_acc(1.0, b, &mut out)?;
        Ok(out)
    }

    /// `out += alpha * A * b`.
    pub fn matmul_dense_acc(
        &self,
        alpha: f64,
        b: &DenseMatrix,
        out: &mut DenseMatrix,
    ) -> Result<()> {
        if self.cols != b.rows() {
            return Err(Error::shape_pair("sparse matmul", self.shape(), b.shape()));
        }
        if out.shape() != (self.rows, b.cols()) {
            return Err(Error::shape_pair(
                "sparse matmul output",
                (self.rows, b.cols()),
                out.shape(),
            ));
        }
        for i in 0..self.rows {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            if span.is_empty() {
                continue;
            }
            let out_row = out.row_mut(i);
            for k in span {
                let w = alpha * self.values[k];
                for (o, &x) in out_row.iter_mut().zip(b.row(self.col_idx[k])) {
                    *o += w * x;
                }
            }
        }
        Ok(())
    }

    /// `A^T * b` without forming the transpose.
    pub fn transpose_matmul_dense(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != b.rows() {
            return Err(Error::shape_pair(
                "sparse transpose matmul",
                (self.cols, self.rows),
                b.shape(),
            ));
        }
        let mut out = DenseMatrix::zeros(self.cols, b.cols());
        for i in 0..self.rows {
            let b_row = b.row(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = self.values[k];
                for (o, &x) in out.row_mut(self.col_idx[k]).iter_mut().zip(b_row) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> SparseMatrix {
        let dense = DenseMatrix::from_fn(rows, cols, |_, _| {
            if rng.random::<f64>() < density {
                rng.random_range(-2.0..2.0)
            } else {
                0.0
            }
        });
        SparseMatrix::from_dense(&dense)
    }

    #[test]
    fn all_zero_sparse_gives_zero_product() {
        let a = SparseMatrix::empty(3, 4);
        let b = DenseMatrix::from_fn(4, 2, |i, j| (i + j) as f64 + 1.0);
        assert_eq!(a.matmul_dense(&b).unwrap(), DenseMatrix::zeros(3, 2));
    }

    #[test]
    fn matches_densified_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let a = random_sparse(&mut rng, 6, 6, 0.3);
            let b = DenseMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
            let oracle = a.to_dense().matmul(&b).unwrap();
            assert!(a.matmul_dense(&b).unwrap().max_abs_diff(&oracle) < 1e-12);
            let t_oracle = a.to_dense().transpose().matmul(&b).unwrap();
            assert!(
                a.transpose_matmul_dense(&b)
                    .unwrap()
                    .max_abs_diff(&t_oracle)
                    < 1e-12
            );
        }
    }

    #[test]
    fn rejects_unsorted_columns() {
        let err = SparseMatrix::from_csr(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]);
        assert!(err.is_err());
        let err = SparseMatrix::from_csr(1, 3, vec![0, 1], vec![3], vec![1.0]);
        assert!(err.is_err());
    }

    #[test]
    fn duplicate_triplets_collapse_or_sum() {
        let t = [(0, 1, 1.0), (0, 1, 1.0), (1, 0, 2.0)];
        let c = SparseMatrix::from_triplets(2, 2, &t, Duplicates::Collapse).unwrap();
        assert_eq!(c.nnz(), 2);
        assert_eq!(c.get(0, 1), 1.0);
        let s = SparseMatrix::from_triplets(2, 2, &t, Duplicates::Sum).unwrap();
        assert_eq!(s.get(0, 1), 2.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = SparseMatrix::identity(3);
        assert!(a.matmul_dense(&DenseMatrix::zeros(2, 2)).is_err());
    }
}
