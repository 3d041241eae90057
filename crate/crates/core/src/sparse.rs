//! Row-compressed sparse matrices with the diagonal stored separately.
//!
//! Keeping the diagonal apart lets operators such as the finite-volume
//! Laplacian build `diag = -sum(offdiag)` and have `matvec` reproduce exact
//! zero row sums: the off-diagonal products are accumulated first, in the
//! same order, and the diagonal is added last.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    diag: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from a diagonal and per-row off-diagonal entries.
    ///
    /// Rows are sorted by column; exact zeros are dropped; repeated columns
    /// are summed.
    pub fn from_rows(diag: Vec<f64>, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = diag.len();
        if rows.len() != n {
            return Err(Error::param(format!(
                "sparse matrix: {} rows for dimension {n}",
                rows.len()
            )));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            let start = cols.len();
            for (j, v) in row {
                if j >= n || j == i {
                    return Err(Error::param(format!(
                        "sparse matrix: invalid off-diagonal column {j} in row {i}"
                    )));
                }
                if cols.len() > start && *cols.last().unwrap() == j {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                }
            }
            // drop exact zeros, including ones created by summation
            let mut w = start;
            for r in start..cols.len() {
                if vals[r] != 0.0 {
                    cols[w] = cols[r];
                    vals[w] = vals[r];
                    w += 1;
                }
            }
            cols.truncate(w);
            vals.truncate(w);
            row_ptr.push(cols.len());
        }
        Ok(Self { n, diag, row_ptr, cols, vals })
    }

    pub fn from_diagonal(diag: Vec<f64>) -> Self {
        let n = diag.len();
        Self { n, diag, row_ptr: vec![0; n + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::param("from_dense: matrix must be square"));
        }
        let n = m.nrows();
        let diag = (0..n).map(|i| m[(i, i)]).collect();
        let rows = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| (j, m[(i, j)])).collect())
            .collect();
        Self::from_rows(diag, rows)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal `(columns, values)` of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    /// Stored entries in row `i`, counting a nonzero diagonal.
    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i] + usize::from(self.diag[i] != 0.0)
    }

    pub fn nnz(&self) -> usize {
        (0..self.n).map(|i| self.row_nnz(i)).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    /// Dot product of row `i` with `x`, off-diagonals first.
    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            s += self.vals[k] * x[self.cols[k]];
        }
        s + self.diag[i] * x[i]
    }

    /// Same as [`row_dot`](Self::row_dot) with `x` read at a stride, so a
    /// register of a tensor-product state can be used in place.
    #[inline]
    pub fn row_dot_strided(&self, i: usize, x: &[f64], offset: usize, stride: usize) -> f64 {
        let mut s = 0.0;
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            s += self.vals[k] * x[offset + self.cols[k] * stride];
        }
        s + self.diag[i] * x[offset + i * stride]
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::param(format!(
                "matvec: vector length {} for dimension {}",
                x.len(),
                self.n
            )));
        }
        Ok((0..self.n).map(|i| self.row_dot(i, x)).collect())
    }

    /// `a*self + b*other`; both must have the same dimension.
    pub fn linear_combination(&self, a: f64, other: &SparseMatrix, b: f64) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::param("linear_combination: dimension mismatch"));
        }
        let diag = self
            .diag
            .iter()
            .zip(&other.diag)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let rows = (0..self.n)
            .map(|i| {
                let (c1, v1) = self.row(i);
                let (c2, v2) = other.row(i);
                c1.iter()
                    .zip(v1)
                    .map(|(&j, &v)| (j, a * v))
                    .chain(c2.iter().zip(v2).map(|(&j, &v)| (j, b * v)))
                    .collect()
            })
            .collect();
        Self::from_rows(diag, rows)
    }

    /// Adds `d` to the diagonal.
    pub fn add_diagonal(&self, d: &[f64]) -> Result<Self> {
        if d.len() != self.n {
            return Err(Error::param("add_diagonal: length mismatch"));
        }
        let mut out = self.clone();
        for (x, y) in out.diag.iter_mut().zip(d) {
            *x += y;
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.diag.iter_mut().for_each(|x| *x *= s);
        out.vals.iter_mut().for_each(|x| *x *= s);
        out
    }

    /// `D_left * self * D_right` for diagonal scalings.
    pub fn diag_scaled(&self, left: &[f64], right: &[f64]) -> Result<Self> {
        if left.len() != self.n || right.len() != self.n {
            return Err(Error::param("diag_scaled: length mismatch"));
        }
        let mut out = self.clone();
        for i in 0..self.n {
            out.diag[i] *= left[i] * right[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.vals[k] *= left[i] * right[self.cols[k]];
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                rows[j].push((i, x));
            }
        }
        Self::from_rows(self.diag.clone(), rows).expect("transpose of a valid matrix")
    }

    /// Largest `|A_ij - A_ji|` relative to the largest `|A_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = self.diag.iter().fold(0.0, |m, x| m.max(x.abs()));
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                scale = scale.max(x.abs());
                worst = worst.max((x - self.get(j, i)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Row-major `(row, col, value)` triplets, diagonal in its sorted place,
    /// zero diagonal entries omitted.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let (c, v) = self.row(i);
            let mut diag_done = self.diag[i] == 0.0;
            for (&j, &x) in c.iter().zip(v) {
                if !diag_done && j > i {
                    out.push((i, i, self.diag[i]));
                    diag_done = true;
                }
                out.push((i, j, x));
            }
            if !diag_done {
                out.push((i, i, self.diag[i]));
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Coordinate text: `row col value`, 0-based, 17 significant digits.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(out, "{i} {j} {v:.16e}")?;
        }
        Ok(())
    }
}
