use nalgebra::DMatrix;

use super::CsrMatrix;
use crate::error::{Error, Result};

/// Largest `m * n` for which dense SVD-based oracles are attempted.
pub const DEFAULT_DENSE_CAP: usize = 4_000_000;

/// Singular values below `RANK_TOL * sigma_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

pub fn to_dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        for (c, v) in a.row(i).iter() {
            d[(i, c)] = v;
        }
    }
    d
}

pub(crate) fn check_cap(m: usize, n: usize, cap: usize) -> Result<()> {
    if m.saturating_mul(n) > cap {
        return Err(Error::TooLarge { m, n, cap });
    }
    Ok(())
}

/// Nonzero singular values of `A` in descending order.
pub fn nonzero_singular_values(a: &CsrMatrix, cap: usize) -> Result<Vec<f64>> {
    check_cap(a.nrows(), a.ncols(), cap)?;
    let d = to_dense(a);
    let mut sv: Vec<f64> = d.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let smax = sv.first().copied().unwrap_or(0.0);
    sv.retain(|&s| s > RANK_TOL * smax);
    Ok(sv)
}
