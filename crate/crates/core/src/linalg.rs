//! Direct factorizations with reuse.
//!
//! Symmetric operators are factored by an envelope (profile) Cholesky in the
//! natural node order. Lexicographic numbering of the structured meshes is
//! already bandwidth-minimal, so no reordering is applied. General operators
//! fall back to dense LU with partial pivoting, which is only ever used for
//! small test systems.

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Reusable factorization of a square operator.
#[derive(Debug, Clone)]
pub enum Factorization {
    Cholesky(EnvelopeCholesky),
    Lu(DenseLu),
}

/// Factors `op`, choosing Cholesky when the operator is tagged symmetric.
pub fn factorize(op: &SparseOperator) -> Result<Factorization> {
    if op.rows() != op.cols() {
        return Err(Error::DimensionMismatch {
            expected: op.rows(),
            got: op.cols(),
        });
    }
    if op.is_symmetric() {
        EnvelopeCholesky::new(op).map(Factorization::Cholesky)
    } else {
        DenseLu::new(op.to_dense()).map(Factorization::Lu)
    }
}

impl Factorization {
    pub fn dim(&self) -> usize {
        match self {
            Factorization::Cholesky(c) => c.dim(),
            Factorization::Lu(l) => l.dim(),
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rhs.len(),
            });
        }
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        match self {
            Factorization::Cholesky(c) => c.solve_in_place(x),
            Factorization::Lu(l) => l.solve_in_place(x),
        }
    }
}

/// Cholesky factor `A = L L^T` stored row-wise over the lower envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    /// First structurally nonzero column of each row.
    first: Vec<usize>,
    /// Offset of row `i`'s envelope in `data`; row `i` spans columns `first[i]..=i`.
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn new(op: &SparseOperator) -> Result<Self> {
        let n = op.rows();
        let mut first = Vec::with_capacity(n);
        for i in 0..n {
            let (idx, _) = op.row(i);
            first.push(idx.first().copied().unwrap_or(i).min(i));
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0usize;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        let mut data = vec![0.0; total];
        let mut scale = 0.0f64;
        for i in 0..n {
            let (idx, val) = op.row(i);
            for (&c, &v) in idx.iter().zip(val) {
                if c <= i {
                    data[start[i] + c - first[i]] = v;
                }
                if c == i {
                    scale = scale.max(v.abs());
                }
            }
        }
        let tiny = scale * 1e-14;
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_i = &data[start[i] + k0 - fi..start[i] + j - fi];
                let row_j = &data[start[j] + k0 - fj..start[j] + j - fj];
                let dot: f64 = row_i.iter().zip(row_j).map(|(a, b)| a * b).sum();
                let s = data[start[i] + j - fi] - dot;
                if j < i {
                    let d = data[start[j + 1] - 1];
                    data[start[i] + j - fi] = s / d;
                } else {
                    if !(s > tiny) || !s.is_finite() {
                        return Err(Error::FactorizationFailure { pivot: i });
                    }
                    data[start[i] + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Self {
            n,
            first,
            start,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn stored(&self) -> usize {
        self.data.len()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let (off, diag) = row.split_at(i - fi);
            let dot: f64 = off.iter().zip(&x[fi..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - dot) / diag[0];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let (off, diag) = row.split_at(i - fi);
            let xi = x[i] / diag[0];
            x[i] = xi;
            for (xk, l) in x[fi..i].iter_mut().zip(off) {
                *xk -= l * xi;
            }
        }
    }

    /// Solves two right-hand sides in one sweep over the factor.
    pub fn solve_pair_in_place(&self, a: &mut [f64], b: &mut [f64]) {
        assert_eq!(a.len(), self.n);
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let (off, diag) = row.split_at(i - fi);
            let mut da = 0.0;
            let mut db = 0.0;
            for ((l, xa), xb) in off.iter().zip(&a[fi..i]).zip(&b[fi..i]) {
                da += l * xa;
                db += l * xb;
            }
            a[i] = (a[i] - da) / diag[0];
            b[i] = (b[i] - db) / diag[0];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let (off, diag) = row.split_at(i - fi);
            let ai = a[i] / diag[0];
            let bi = b[i] / diag[0];
            a[i] = ai;
            b[i] = bi;
            for ((l, xa), xb) in off.iter().zip(&mut a[fi..i]).zip(&mut b[fi..i]) {
                *xa -= l * ai;
                *xb -= l * bi;
            }
        }
    }
}

/// Dense LU with partial pivoting.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut lu = Vec::with_capacity(n * n);
        for r in &rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: r.len(),
                });
            }
            lu.extend_from_slice(r);
        }
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * n as f64 * f64::EPSILON;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|r| (r, lu[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pv > tiny) {
                return Err(Error::FactorizationFailure { pivot: k });
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for r in k + 1..n {
                let f = lu[r * n + k] / d;
                lu[r * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        lu[r * n + c] -= f * lu[k * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        let b: Vec<f64> = self.perm.iter().map(|&p| x[p]).collect();
        x.copy_from_slice(&b);
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.lu[i * n + k] * x[k]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.lu[i * n + k] * x[k]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
