//! Compressed sparse row operators.

use crate::error::{Error, Result};

/// Sparse matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    ///
    /// Duplicates are reduced in the order they were pushed, so the result is
    /// bitwise reproducible for a fixed input sequence.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        symmetric: bool,
    ) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
            symmetric,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect(), true)
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

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (idx, val) = self.row(r);
        match idx.binary_search(&c) {
            Ok(k) => val[k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "operand length");
        assert_eq!(y.len(), self.rows, "output length");
        for (r, out) in y.iter_mut().enumerate() {
            let (idx, val) = self.row(r);
            *out = idx.iter().zip(val).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    /// Checked product.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok(self.mul_vec(x))
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.cols, self.rows, trip, self.symmetric)
    }

    /// Linear combination `a*self + b*other` of two operators of equal shape.
    pub fn add_scaled(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for (m, s) in [(self, a), (other, b)] {
            for r in 0..m.rows {
                let (idx, val) = m.row(r);
                for (&c, &v) in idx.iter().zip(val) {
                    trip.push((r, c, s * v));
                }
            }
        }
        Self::from_triplets(
            self.rows,
            self.cols,
            trip,
            self.symmetric && other.symmetric,
        )
    }

    /// Extracts the block selected by `row_map` and `col_map` (new index -> old index).
    pub fn submatrix(&self, row_map: &[usize], col_map: &[usize]) -> Self {
        let mut col_lookup = vec![usize::MAX; self.cols];
        for (new, &old) in col_map.iter().enumerate() {
            col_lookup[old] = new;
        }
        let mut trip = Vec::new();
        for (nr, &r) in row_map.iter().enumerate() {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                let nc = col_lookup[c];
                if nc != usize::MAX {
                    trip.push((nr, nc, v));
                }
            }
        }
        let symmetric = self.symmetric && row_map == col_map;
        Self::from_triplets(row_map.len(), col_map.len(), trip, symmetric)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entry of `|A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                worst = worst.max((v - t.get(r, c)).abs());
            }
            let (idx, val) = t.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                worst = worst.max((v - self.get(r, c)).abs());
            }
        }
        worst
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for (r, row) in out.iter_mut().enumerate() {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                row[c] = v;
            }
        }
        out
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let a = SparseOperator::from_triplets(
            2,
            3,
            vec![(0, 1, 1.0), (1, 0, 2.0), (0, 1, 0.5), (1, 2, -1.0)],
            false,
        );
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 1), 1.5);
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.mul_vec(&[1.0, 2.0, 3.0]), vec![3.0, -1.0]);
        let t = a.transpose();
        assert_eq!(t.rows(), 3);
        assert_eq!(t.get(1, 0), 1.5);
        assert!(a.apply(&[1.0]).is_err());
    }

    #[test]
    fn submatrix_and_combination() {
        let a = SparseOperator::from_triplets(
            3,
            3,
            vec![(0, 0, 4.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 4.0), (2, 2, 1.0)],
            true,
        );
        let s = a.submatrix(&[1, 2], &[1, 2]);
        assert_eq!(s.to_dense(), vec![vec![4.0, 0.0], vec![0.0, 1.0]]);
        assert!(s.is_symmetric());
        let c = a.add_scaled(2.0, &SparseOperator::identity(3), -1.0);
        assert_eq!(c.get(0, 0), 7.0);
        assert_eq!(c.get(0, 1), -2.0);
        assert_eq!(a.asymmetry(), 0.0);
        assert_eq!(a.norm_inf(), 5.0);
    }
}
