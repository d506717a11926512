//! Compressed sparse row matrices and a direct solver backed by `faer`.

use crate::error::{Error, Result};
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

/// A real sparse matrix in compressed row storage with sorted, unique columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    /// Number of rows.
    pub n_rows: usize,
    /// Number of columns.
    pub n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix from `(row, col, value)` entries; duplicates are summed
    /// in input order, so assembly is deterministic.
    pub fn from_triplets(n_rows: usize, n_cols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in entries {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of range");
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut tmp = vec![(0usize, 0.0f64); entries.len()];
        for &(r, c, v) in entries {
            tmp[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        for r in 0..n_rows {
            let row = &mut tmp[counts[r]..counts[r + 1]];
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *vals.last_mut().expect("entry exists") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        CsrMatrix { n_rows, n_cols, row_ptr, cols, vals }
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Entries of row `r` as `(col, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    /// Entry `(r, c)` (zero when not stored).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.cols[a..b].binary_search(&c) {
            Ok(k) => self.vals[a + k],
            Err(_) => 0.0,
        }
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Restriction to the given rows and columns (in the given orders).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n_cols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        let mut entries = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if map[c] != usize::MAX {
                    entries.push((i, map[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), &entries)
    }

    /// Dense copy, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out[r * self.n_cols + c] = v;
            }
        }
        out
    }

    /// All stored entries as triplets.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out.push((r, c, v));
            }
        }
        out
    }
}

/// A sparse LU factorization of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SparseLu(n = {})", self.n)
    }
}

impl SparseLu {
    /// Factors a square matrix.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::Solver(format!("matrix is {} x {}", a.n_rows, a.n_cols)));
        }
        faer::set_global_parallelism(faer::Par::Seq);
        let trips: Vec<Triplet<usize, usize, f64>> =
            a.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.n_rows, a.n_cols, &trips)
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::Solver(format!("{e:?}")))?;
        Ok(SparseLu { n: a.n_rows, lu })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite solution (singular matrix)".into()));
        }
        Ok(out)
    }
}

/// Singular values of a dense row-major matrix, in decreasing order.
pub fn singular_values(a: &[f64], n_rows: usize, n_cols: usize) -> Result<Vec<f64>> {
    faer::set_global_parallelism(faer::Par::Seq);
    let m = Mat::<f64>::from_fn(n_rows, n_cols, |i, j| a[i * n_cols + j]);
    let mut s = m.singular_values().map_err(|e| Error::Solver(format!("{e:?}")))?;
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(s)
}

/// Relative residual `|A x - b| / max(|b|, |A| |x|)` in the max norm.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r = ax.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = bn.max(a.max_abs() * xn);
    if scale == 0.0 {
        0.0
    } else {
        r / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum_and_lu_solves() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0), (2, 0, 1.0), (2, 2, 5.0)],
        );
        assert_eq!(a.get(0, 0), 4.0);
        let x = [1.0, -2.0, 0.5];
        let b = a.matvec(&x);
        let y = SparseLu::new(&a).unwrap().solve(&b).unwrap();
        for i in 0..3 {
            assert!((x[i] - y[i]).abs() < 1e-14);
        }
        assert!(relative_residual(&a, &y, &b) < 1e-15);
    }

    #[test]
    fn singular_values_of_diagonal() {
        let s = singular_values(&[3.0, 0.0, 0.0, -4.0], 2, 2).unwrap();
        assert!((s[0] - 4.0).abs() < 1e-14 && (s[1] - 3.0).abs() < 1e-14);
    }
}
