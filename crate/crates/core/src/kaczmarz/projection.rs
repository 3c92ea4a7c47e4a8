use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::sparsemat::{check_cap, to_dense, CsrMatrix, RANK_TOL};

/// Relative residual above which `b` is declared outside the range of `A`.
const CONSISTENCY_TOL: f64 = 1e-8;

/// Dense description of the affine solution set `{z : Az = b}`.
///
/// Holds the minimum-norm solution and an orthonormal basis of the row
/// space, so that projection onto the set is `x - V V^T (x - x_min)`.
#[derive(Clone, Debug)]
pub struct SolutionSet {
    x_min: DVector<f64>,
    /// `n x r` orthonormal basis of `range(A^T)`; `None` when `r = n`.
    row_basis: Option<DMatrix<f64>>,
    rank: usize,
}

impl SolutionSet {
    pub fn new(a: &CsrMatrix, b: &[f64], dense_cap: usize) -> Result<Self> {
        check_len("b", b.len(), a.nrows())?;
        let n = a.ncols();
        check_cap(a.nrows(), n, dense_cap)?;
        let d = to_dense(a);
        let svd = d.clone().svd(true, true);
        let u = svd.u.as_ref().expect("requested U");
        let vt = svd.v_t.as_ref().expect("requested V^T");
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| svd.singular_values[k] > RANK_TOL * smax)
            .collect();
        let rank = keep.len();

        let bv = DVector::from_column_slice(b);
        let mut x_min = DVector::zeros(n);
        let mut basis = DMatrix::zeros(n, rank);
        for (col, &k) in keep.iter().enumerate() {
            let vk = vt.row(k).transpose();
            let coef = u.column(k).dot(&bv) / svd.singular_values[k];
            x_min.axpy(coef, &vk, 1.0);
            basis.set_column(col, &vk);
        }

        let resid = (&d * &x_min - &bv).norm();
        if resid > CONSISTENCY_TOL * bv.norm().max(1.0) {
            return Err(Error::Inconsistent(resid));
        }
        Ok(SolutionSet {
            x_min,
            row_basis: (rank < n).then_some(basis),
            rank,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn min_norm_solution(&self) -> &[f64] {
        self.x_min.as_slice()
    }

    /// Euclidean projection of `x` onto the solution set.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        match &self.row_basis {
            None => self.x_min.as_slice().to_vec(),
            Some(v) => {
                let diff = &xv - &self.x_min;
                let coords = v.transpose() * diff;
                (xv - v * coords).as_slice().to_vec()
            }
        }
    }

    /// `||x - P(x)||^2`, the squared distance to the solution set.
    pub fn dist_sq(&self, x: &[f64]) -> f64 {
        match &self.row_basis {
            None => x
                .iter()
                .zip(self.x_min.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
            Some(v) => {
                let mut acc = 0.0;
                for c in 0..v.ncols() {
                    let col = v.column(c);
                    let mut dot = 0.0;
                    for k in 0..x.len() {
                        dot += col[k] * (x[k] - self.x_min[k]);
                    }
                    acc += dot * dot;
                }
                acc
            }
        }
    }
}

/// Projects `x` onto `{z : Az = b}` using a dense pseudoinverse.
pub fn project_solution_set(a: &CsrMatrix, b: &[f64], x: &[f64], dense_cap: usize) -> Result<Vec<f64>> {
    check_len("x", x.len(), a.ncols())?;
    Ok(SolutionSet::new(a, b, dense_cap)?.project(x))
}
