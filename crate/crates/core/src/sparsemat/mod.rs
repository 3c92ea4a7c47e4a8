//! Row-compressed sparse matrices and the structural quantities the
//! convergence theory is stated in.

mod dense;
mod mtx;
mod stats;

pub(crate) use dense::check_cap;
pub use dense::{nonzero_singular_values, to_dense, DEFAULT_DENSE_CAP, RANK_TOL};
pub use mtx::{read_matrix_market, read_vector, write_matrix_market, write_vector};
pub use stats::{compute_stats, lambda_max_power, StatsOptions, SystemStats};

use crate::error::{check_len, Error, Result};

/// Tolerance on `| ||a_i|| - 1 |` for a matrix to count as row-normalized.
pub const NORMALIZED_TOL: f64 = 1e-12;

/// Compressed sparse row matrix with cached row norms.
///
/// Rows are sorted by column, hold no explicit zeros, and no row is empty.
/// The matrix is immutable once built and can be shared across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    m: usize,
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    row_norm: Vec<f64>,
    row_norm_sq: Vec<f64>,
    normalized: bool,
}

/// Borrowed view of one row.
#[derive(Clone, Copy, Debug)]
pub struct RowView<'a> {
    pub cols: &'a [usize],
    pub vals: &'a [f64],
}

impl<'a> RowView<'a> {
    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.cols.iter().copied().zip(self.vals.iter().copied())
    }

    /// Position of column `col` inside the row, if present.
    pub fn position(&self, col: usize) -> Option<usize> {
        self.cols.binary_search(&col).ok()
    }
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets.
    ///
    /// Zero values are dropped. Duplicate coordinates are rejected rather than
    /// summed so that sparsity statistics are never altered silently.
    pub fn from_triplets(entries: &[(usize, usize, f64)], m: usize, n: usize) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for &(row, col, v) in entries {
            if row >= m || col >= n {
                return Err(Error::IndexOutOfRange { row, col, m, n });
            }
            sorted.push((row, col, v));
        }
        sorted.sort_unstable_by_key(|e| (e.0, e.1));
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::DuplicateEntry {
                    row: w[0].0,
                    col: w[0].1,
                });
            }
        }

        let mut row_ptr = vec![0usize; m + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for &(row, col, v) in &sorted {
            if v == 0.0 {
                continue;
            }
            row_ptr[row + 1] += 1;
            col_idx.push(col);
            values.push(v);
        }
        for i in 0..m {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::from_parts(m, n, row_ptr, col_idx, values)
    }

    fn from_parts(
        m: usize,
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut row_norm = Vec::with_capacity(m);
        let mut row_norm_sq = Vec::with_capacity(m);
        for i in 0..m {
            let vals = &values[row_ptr[i]..row_ptr[i + 1]];
            let sq: f64 = vals.iter().map(|v| v * v).sum();
            if vals.is_empty() || sq == 0.0 {
                return Err(Error::ZeroRow(i));
            }
            row_norm_sq.push(sq);
            row_norm.push(sq.sqrt());
        }
        let normalized = row_norm
            .iter()
            .all(|r| (r - 1.0).abs() <= NORMALIZED_TOL);
        Ok(CsrMatrix {
            m,
            n,
            row_ptr,
            col_idx,
            values,
            row_norm,
            row_norm_sq,
            normalized,
        })
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.m {
            for (c, v) in self.row(i).iter() {
                out.push((i, c, v));
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.m
    }

    pub fn ncols(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> RowView<'_> {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        RowView {
            cols: &self.col_idx[s..e],
            vals: &self.values[s..e],
        }
    }

    /// θ_i, the number of nonzeros in row `i`.
    #[inline]
    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.row_norm
    }

    #[inline]
    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_norm_sq[i]
    }

    /// True when every row norm is within [`NORMALIZED_TOL`] of one.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::NotNormalized)
        }
    }

    pub fn frob_sq(&self) -> f64 {
        self.row_norm_sq.iter().sum()
    }

    /// `a_i^T x` for an arbitrary element accessor. Summation order is the
    /// stored column order, so every solver path produces identical bits.
    #[inline]
    pub fn row_dot_with(&self, i: usize, read: impl Fn(usize) -> f64) -> f64 {
        let row = self.row(i);
        let mut acc = 0.0;
        for k in 0..row.cols.len() {
            acc += row.vals[k] * read(row.cols[k]);
        }
        acc
    }

    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.row_dot_with(i, |c| x[c])
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("x", x.len(), self.n)?;
        Ok((0..self.m).map(|i| self.row_dot(i, x)).collect())
    }

    /// `A^T y`.
    pub fn matvec_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("y", y.len(), self.m)?;
        let mut out = vec![0.0; self.n];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (c, v) in self.row(i).iter() {
                out[c] += v * yi;
            }
        }
        Ok(out)
    }

    /// Nonzero count of each column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        counts
    }

    /// Squared Euclidean norm of each column, i.e. the diagonal of `A^T A`.
    pub fn column_norms_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (&c, &v) in self.col_idx.iter().zip(&self.values) {
            out[c] += v * v;
        }
        out
    }

    /// Column-major index of the same nonzeros.
    pub fn columns(&self) -> ColumnIndex {
        ColumnIndex::new(self)
    }

    /// Returns a copy with each row divided by `scales[i]`.
    pub(crate) fn scale_rows(&self, scales: &[f64]) -> Result<Self> {
        let mut values = self.values.clone();
        for i in 0..self.m {
            for v in &mut values[self.row_ptr[i]..self.row_ptr[i + 1]] {
                *v /= scales[i];
            }
        }
        Self::from_parts(
            self.m,
            self.n,
            self.row_ptr.clone(),
            self.col_idx.clone(),
            values,
        )
    }
}

/// Compressed-column view of a [`CsrMatrix`], used for column statistics
/// and for building `A^T` blocks.
#[derive(Clone, Debug)]
pub struct ColumnIndex {
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl ColumnIndex {
    fn new(a: &CsrMatrix) -> Self {
        let n = a.ncols();
        let mut col_ptr = vec![0usize; n + 1];
        for &c in a.col_idx() {
            col_ptr[c + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; a.nnz()];
        let mut values = vec![0.0; a.nnz()];
        for i in 0..a.nrows() {
            for (c, v) in a.row(i).iter() {
                let slot = next[c];
                row_idx[slot] = i;
                values[slot] = v;
                next[c] += 1;
            }
        }
        ColumnIndex {
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.row_idx[s..e], &self.values[s..e])
    }
}

/// Scales every row of `A` (and the matching entry of `b`) to unit norm.
///
/// The solution set of `Ax = b` is unchanged. An already-normalized matrix is
/// returned untouched together with an identical `b`.
pub fn normalize_rows(a: &CsrMatrix, b: &[f64]) -> Result<(CsrMatrix, Vec<f64>)> {
    check_len("b", b.len(), a.nrows())?;
    if a.is_normalized() {
        return Ok((a.clone(), b.to_vec()));
    }
    let scales = a.row_norms().to_vec();
    let scaled = a.scale_rows(&scales)?;
    let bs = b.iter().zip(&scales).map(|(bi, s)| bi / s).collect();
    if !scaled.is_normalized() {
        return Err(Error::NotNormalized);
    }
    Ok((scaled, bs))
}

/// Residual `r = Ax - b` and the two scalar measures reported in traces.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    pub r: Vec<f64>,
    /// `||Ax - b||^2`
    pub r_sq: f64,
    /// `||A^T (Ax - b)||^2`
    pub grad_sq: f64,
}

pub fn residuals(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Result<Residuals> {
    check_len("x", x.len(), a.ncols())?;
    check_len("b", b.len(), a.nrows())?;
    let r: Vec<f64> = (0..a.nrows()).map(|i| a.row_dot(i, x) - b[i]).collect();
    let r_sq = r.iter().map(|v| v * v).sum();
    let g = a.matvec_t(&r)?;
    let grad_sq = g.iter().map(|v| v * v).sum();
    Ok(Residuals { r, r_sq, grad_sq })
}

/// `||Ax - b||^2` without materialising the gradient.
pub fn residual_sq(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    (0..a.nrows())
        .map(|i| {
            let r = a.row_dot(i, x) - b[i];
            r * r
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag34() -> CsrMatrix {
        CsrMatrix::from_triplets(&[(0, 0, 3.0), (1, 1, 4.0)], 2, 2).unwrap()
    }

    #[test]
    fn diagonal_construction() {
        let a = diag34();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.row_norms(), &[3.0, 4.0]);
        assert!(!a.is_normalized());
    }

    #[test]
    fn empty_row_rejected() {
        let err = CsrMatrix::from_triplets(&[], 1, 1).unwrap_err();
        assert!(matches!(err, Error::ZeroRow(0)));
        let err = CsrMatrix::from_triplets(&[(0, 0, 0.0)], 1, 1).unwrap_err();
        assert!(matches!(err, Error::ZeroRow(0)));
    }

    #[test]
    fn bad_triplets_rejected() {
        assert!(matches!(
            CsrMatrix::from_triplets(&[(0, 2, 1.0)], 1, 2),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            CsrMatrix::from_triplets(&[(0, 1, 1.0), (0, 1, 2.0)], 1, 2),
            Err(Error::DuplicateEntry { row: 0, col: 1 })
        ));
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, n) = (100, 50);
        // one nonzero per row first, then 400 more distinct positions
        let mut taken = std::collections::BTreeSet::new();
        for i in 0..m {
            taken.insert(i * n + rng.random_range(0..n));
        }
        while taken.len() < 500 {
            taken.insert(rng.random_range(0..m * n));
        }
        let trip: Vec<_> = taken
            .iter()
            .map(|k| (k / n, k % n, rng.random_range(0.5..2.0)))
            .collect();
        let a = CsrMatrix::from_triplets(&trip, m, n).unwrap();
        assert_eq!(a.nnz(), 500);
        assert_eq!(a.to_triplets(), trip);
    }

    #[test]
    fn normalize_345() {
        let a = CsrMatrix::from_triplets(&[(0, 0, 3.0), (0, 1, 4.0)], 1, 2).unwrap();
        let (an, bn) = normalize_rows(&a, &[10.0]).unwrap();
        assert_eq!(an.values(), &[0.6, 0.8]);
        assert_eq!(bn, vec![2.0]);
        assert!(an.is_normalized());
        // idempotent
        let (again, b2) = normalize_rows(&an, &bn).unwrap();
        assert_eq!(again, an);
        assert_eq!(b2, bn);
    }

    #[test]
    fn identity_residuals() {
        let a = CsrMatrix::from_triplets(&[(0, 0, 1.0), (1, 1, 1.0)], 2, 2).unwrap();
        let r = residuals(&a, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.r_sq, 2.0);
        assert_eq!(r.grad_sq, 2.0);
        let r = residuals(&a, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!((r.r_sq, r.grad_sq), (0.0, 0.0));
        assert!(matches!(
            residuals(&a, &[1.0], &[1.0, 1.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn residuals_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, n) = (40, 30);
        let mut trip = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if rng.random::<f64>() < 0.2 || j == i % n {
                    trip.push((i, j, rng.random_range(-1.0..1.0)));
                }
            }
        }
        let a = CsrMatrix::from_triplets(&trip, m, n).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let res = residuals(&a, &x, &b).unwrap();
        let d = to_dense(&a);
        let r = &d * nalgebra::DVector::from_column_slice(&x) - nalgebra::DVector::from_column_slice(&b);
        let g = d.transpose() * &r;
        assert!((res.r_sq - r.norm_squared()).abs() <= 1e-12 * r.norm_squared().max(1.0));
        assert!((res.grad_sq - g.norm_squared()).abs() <= 1e-12 * g.norm_squared().max(1.0));
    }

    proptest! {
        #[test]
        fn triplet_round_trip(seed in any::<u64>(), m in 1usize..20, n in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut trip = Vec::new();
            for i in 0..m {
                let first = rng.random_range(0..n);
                for j in 0..n {
                    if j == first || rng.random::<f64>() < 0.3 {
                        trip.push((i, j, rng.random_range(0.1..3.0)));
                    }
                }
            }
            let a = CsrMatrix::from_triplets(&trip, m, n).unwrap();
            prop_assert_eq!(a.to_triplets(), trip.clone());
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (an, _) = normalize_rows(&a, &b).unwrap();
            for r in an.row_norms() {
                prop_assert!((r - 1.0).abs() <= NORMALIZED_TOL);
            }
            prop_assert!((an.frob_sq() - m as f64).abs() <= 1e-8 * m as f64);
        }
    }
}
