//! Least squares through the square consistent system
//!
//! ```text
//! [ 0   φ A^T ] [x]   [φ A^T b]
//! [ A   -ζ I  ] [y] = [   0   ]
//! ```
//!
//! whose `x` block is `ζ` times a least-squares solution of `Ax = b`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kaczmarz::{rk_solve, RkConfig, Sampling};
use crate::parallel::{solve_parallel, RunConfig};
use crate::sparsemat::{normalize_rows, nonzero_singular_values, CsrMatrix, DEFAULT_DENSE_CAP};
use crate::trace::Trace;

/// `(φ, ζ) = (1, σ_r / √2)`, the maximizer of [`critical_ratio`].
pub fn optimal_params(sigma_r: f64) -> Result<(f64, f64)> {
    if !(sigma_r > 0.0 && sigma_r.is_finite()) {
        return Err(Error::NonPositiveSigma(sigma_r));
    }
    Ok((1.0, sigma_r * std::f64::consts::FRAC_1_SQRT_2))
}

/// Lower bound on `λ_min(Ã^T Ã) / ||Ã||_F^2` for the augmented matrix.
pub fn critical_ratio(sigma_r: f64, frob_sq: f64, m: usize, zeta: f64, phi: f64) -> Result<f64> {
    let (num, _) = critical_branches(sigma_r, zeta, phi)?;
    if !(frob_sq > 0.0) || m == 0 {
        return Err(Error::InvalidConfig(format!("need frob_sq > 0 and m > 0, got {frob_sq}, {m}")));
    }
    let den = (1.0 + phi * phi) * frob_sq + m as f64 * zeta * zeta;
    Ok(num * num / den)
}

/// The two arguments of the `min` in the ratio's numerator, returned as
/// `(min, (ζ, -ζ/2 + sqrt(ζ^2 + 4 φ σ_r^2)/2))`.
pub fn critical_branches(sigma_r: f64, zeta: f64, phi: f64) -> Result<(f64, (f64, f64))> {
    for (name, v) in [("sigma_r", sigma_r), ("zeta", zeta), ("phi", phi)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
        }
    }
    let second = -zeta / 2.0 + 0.5 * (zeta * zeta + 4.0 * phi * sigma_r * sigma_r).sqrt();
    Ok((zeta.min(second), (zeta, second)))
}

#[derive(Clone, Debug)]
pub struct AugmentedSystem {
    /// Row-normalized augmented matrix, `(n + m) x (n + m)`.
    pub a_tilde: CsrMatrix,
    /// Right-hand side scaled with the rows.
    pub b_tilde: Vec<f64>,
    pub zeta: f64,
    pub phi: f64,
    /// Norm of every augmented row before normalization.
    pub row_scales: Vec<f64>,
    /// Columns of the original matrix.
    pub n: usize,
}

impl AugmentedSystem {
    /// The augmented matrix and right-hand side before row scaling.
    pub fn unscaled(&self) -> (CsrMatrix, Vec<f64>) {
        let inv: Vec<f64> = self.row_scales.iter().map(|s| 1.0 / s).collect();
        let a = self.a_tilde.scale_rows(&inv).expect("rows stay nonzero");
        let b = self.b_tilde.iter().zip(&self.row_scales).map(|(v, s)| v * s).collect();
        (a, b)
    }

    /// `x_ls = x̂ / ζ` from a solution `(x̂, ŷ)` of the augmented system.
    pub fn recover(&self, z: &[f64]) -> Vec<f64> {
        z[..self.n].iter().map(|v| v / self.zeta).collect()
    }
}

pub fn augment(a: &CsrMatrix, b: &[f64], zeta: f64, phi: f64) -> Result<AugmentedSystem> {
    check_len("b", b.len(), a.nrows())?;
    critical_branches(1.0, zeta, phi)?;
    let (m, n) = (a.nrows(), a.ncols());
    let cols = a.columns();
    let mut t = Vec::with_capacity(2 * a.nnz() + m);
    let mut b_tilde = vec![0.0; n + m];
    for j in 0..n {
        let (rows, vals) = cols.column(j);
        if rows.is_empty() {
            return Err(Error::ZeroColumn(j));
        }
        let mut atb = 0.0;
        for (&i, &v) in rows.iter().zip(vals) {
            t.push((j, n + i, phi * v));
            atb += v * b[i];
        }
        b_tilde[j] = phi * atb;
    }
    for i in 0..m {
        for (c, v) in a.row(i).iter() {
            t.push((n + i, c, v));
        }
        t.push((n + i, n + i, -zeta));
    }
    let raw = CsrMatrix::from_triplets(&t, n + m, n + m)?;
    let row_scales = raw.row_norms().to_vec();
    let (a_tilde, b_tilde) = normalize_rows(&raw, &b_tilde)?;
    Ok(AugmentedSystem {
        a_tilde,
        b_tilde,
        zeta,
        phi,
        row_scales,
        n,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsqSolver {
    Serial { sampling: Sampling },
    Parallel(RunConfig),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LsqConfig {
    /// Smallest nonzero singular value of `A`; computed densely when absent.
    pub sigma_r: Option<f64>,
    pub zeta: Option<f64>,
    pub phi: Option<f64>,
    pub max_epochs: usize,
    /// Stopping threshold on the augmented (normalized) residual.
    pub target_r_sq: f64,
    pub seed: u64,
    pub solver: LsqSolver,
    pub dense_cap: usize,
}

impl Default for LsqConfig {
    fn default() -> Self {
        LsqConfig {
            sigma_r: None,
            zeta: None,
            phi: None,
            max_epochs: 10_000,
            target_r_sq: 1e-26,
            seed: 0,
            solver: LsqSolver::Serial { sampling: Sampling::Uniform },
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LsqResult {
    pub x_ls: Vec<f64>,
    pub trace: Trace,
    pub sigma_r: f64,
    pub zeta: f64,
    pub phi: f64,
    /// `||A^T (A x_ls - b)||`
    pub normal_residual: f64,
}

pub fn lsq_solve(a: &CsrMatrix, b: &[f64], cfg: &LsqConfig) -> Result<LsqResult> {
    check_len("b", b.len(), a.nrows())?;
    let sigma_r = match cfg.sigma_r {
        Some(s) => s,
        None => match nonzero_singular_values(a, cfg.dense_cap) {
            Ok(sv) => *sv.last().ok_or(Error::SigmaUnavailable)?,
            Err(Error::TooLarge { .. }) => return Err(Error::SigmaUnavailable),
            Err(e) => return Err(e),
        },
    };
    let (phi_opt, zeta_opt) = optimal_params(sigma_r)?;
    let phi = cfg.phi.unwrap_or(phi_opt);
    let zeta = cfg.zeta.unwrap_or(zeta_opt);
    let aug = augment(a, b, zeta, phi)?;
    let z0 = vec![0.0; aug.a_tilde.ncols()];
    let trace = match &cfg.solver {
        LsqSolver::Serial { sampling } => rk_solve(
            &aug.a_tilde,
            &aug.b_tilde,
            &z0,
            &RkConfig {
                max_epochs: cfg.max_epochs,
                target_r_sq: cfg.target_r_sq,
                seed: cfg.seed,
                sampling: *sampling,
            },
        )?,
        LsqSolver::Parallel(run) => solve_parallel(
            &aug.a_tilde,
            &aug.b_tilde,
            &z0,
            &RunConfig {
                epochs: cfg.max_epochs,
                target_r_sq: cfg.target_r_sq,
                seed: cfg.seed,
                ..run.clone()
            },
        )?,
    };
    let x_ls = aug.recover(&trace.final_x);
    let r: Vec<f64> = a.matvec(&x_ls)?.iter().zip(b).map(|(u, v)| u - v).collect();
    let normal_residual = a.matvec_t(&r)?.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(LsqResult {
        x_ls,
        trace,
        sigma_r,
        zeta,
        phi,
        normal_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_sparse_gaussian, GenSpec};
    use crate::sparsemat::to_dense;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn optimal_params_examples() {
        assert_eq!(optimal_params(2f64.sqrt()).unwrap().0, 1.0);
        assert!((optimal_params(2f64.sqrt()).unwrap().1 - 1.0).abs() < 1e-15);
        assert_eq!(optimal_params(1.0).unwrap(), (1.0, std::f64::consts::FRAC_1_SQRT_2));
        assert!(matches!(optimal_params(0.0), Err(Error::NonPositiveSigma(_))));
    }

    #[test]
    fn branches_balance_at_optimal_zeta() {
        let sigma = 0.37;
        for phi in [0.1, 0.5, 1.0, 3.0, 10.0] {
            let zeta = sigma * (phi / 2.0f64).sqrt();
            let (_, (p, q)) = critical_branches(sigma, zeta, phi).unwrap();
            assert!((p - q).abs() < 1e-12);
        }
        let (sigma, f, m) = (0.37, 200.0, 200);
        let at_opt = critical_ratio(sigma, f, m, sigma / 2f64.sqrt(), 1.0).unwrap();
        let closed = sigma * sigma / (4.0 * f + m as f64 * sigma * sigma);
        assert!((at_opt - closed).abs() <= 1e-15 * closed);
    }

    #[test]
    fn optimum_beats_grid() {
        let (sigma, f, m) = (0.41, 200.0, 200);
        let zs = sigma / 2f64.sqrt();
        let best = critical_ratio(sigma, f, m, zs, 1.0).unwrap();
        for a in 0..50 {
            for c in 0..50 {
                let zeta = zs * 10f64.powf(-1.0 + 2.0 * a as f64 / 49.0);
                let phi = 10f64.powf(-1.0 + 2.0 * c as f64 / 49.0);
                assert!(critical_ratio(sigma, f, m, zeta, phi).unwrap() <= best * (1.0 + 1e-12));
            }
        }
        // unimodal in ζ for fixed φ
        let phi = 2.5;
        let vals: Vec<f64> = (0..400)
            .map(|k| critical_ratio(sigma, f, m, 1e-3 * 1.02f64.powi(k), phi).unwrap())
            .collect();
        let peak = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(vals[..peak].windows(2).all(|w| w[0] <= w[1]));
        assert!(vals[peak..].windows(2).all(|w| w[0] >= w[1]));
        let z_peak = 1e-3 * 1.02f64.powi(peak as i32);
        assert!((z_peak / (sigma * (phi / 2.0f64).sqrt())).ln().abs() < 0.02);
    }

    #[test]
    fn identity_expansion() {
        let a = CsrMatrix::from_triplets(&[(0, 0, 1.0), (1, 1, 1.0)], 2, 2).unwrap();
        let aug = augment(&a, &[1.0, 1.0], 1.0, 1.0).unwrap();
        let (raw, b) = aug.unscaled();
        let d = to_dense(&raw);
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[0., 0., 1., 0., 0., 0., 0., 1., 1., 0., -1., 0., 0., 1., 0., -1.],
        );
        assert!((d - expect).norm() < 1e-15);
        assert!(b.iter().zip([1.0, 1.0, 0.0, 0.0]).all(|(u, v)| (u - v).abs() < 1e-15));
        assert!(aug.a_tilde.is_normalized());
    }

    #[test]
    fn frobenius_identity_and_zero_column() {
        let inst = gen_sparse_gaussian(&GenSpec::new(40, 20, 0.3, 2)).unwrap();
        let (phi, zeta) = (0.7, 1.3);
        let aug = augment(&inst.a, &inst.b, zeta, phi).unwrap();
        let (raw, _) = aug.unscaled();
        let expect = (1.0 + phi * phi) * 40.0 + 40.0 * zeta * zeta;
        assert!((raw.frob_sq() - expect).abs() < 1e-10);
        let a = CsrMatrix::from_triplets(&[(0, 0, 1.0), (1, 0, 1.0)], 2, 2).unwrap();
        assert!(matches!(augment(&a, &[1.0, 1.0], 1.0, 1.0), Err(Error::ZeroColumn(1))));
    }

    #[test]
    fn row_scaling_preserves_solution() {
        let inst = gen_sparse_gaussian(&GenSpec::new(30, 12, 0.4, 6)).unwrap();
        let aug = augment(&inst.a, &inst.b, 0.3, 1.0).unwrap();
        let (raw, rb) = aug.unscaled();
        let s1 = to_dense(&raw).lu().solve(&DVector::from_vec(rb)).unwrap();
        let s2 = to_dense(&aug.a_tilde)
            .lu()
            .solve(&DVector::from_column_slice(&aug.b_tilde))
            .unwrap();
        assert!((s1 - s2).norm() < 1e-10);
    }

    fn normal_equations(a: &CsrMatrix, b: &[f64]) -> DVector<f64> {
        let d = to_dense(a);
        let g = d.transpose() * &d;
        g.cholesky().unwrap().solve(&(d.transpose() * DVector::from_column_slice(b)))
    }

    #[test]
    fn consistent_data_gives_plain_solution() {
        let inst = gen_sparse_gaussian(&GenSpec::new(60, 20, 0.3, 4)).unwrap();
        let r = lsq_solve(&inst.a, &inst.b, &LsqConfig::default()).unwrap();
        let xs = DVector::from_vec(inst.x_star.unwrap());
        assert!((DVector::from_vec(r.x_ls) - xs).norm() < 1e-8);
        assert!(r.trace.last().unwrap().r_sq < 1e-20);
    }

    #[test]
    fn inconsistent_matches_normal_equations() {
        let mut spec = GenSpec::new(200, 100, 0.1, 12);
        spec.consistent = false;
        spec.noise_level = 3.0;
        let inst = gen_sparse_gaussian(&spec).unwrap();
        let r = lsq_solve(&inst.a, &inst.b, &LsqConfig::default()).unwrap();
        let oracle = normal_equations(&inst.a, &inst.b);
        let err = (DVector::from_vec(r.x_ls.clone()) - oracle).norm();
        assert!(err < 1e-6, "distance {err}");
        assert!(r.normal_residual < 1e-6);
    }

    #[test]
    fn b_orthogonal_to_range_gives_zero() {
        let mut spec = GenSpec::new(80, 30, 0.2, 3);
        spec.consistent = false;
        spec.noise_level = 1.0;
        let inst = gen_sparse_gaussian(&spec).unwrap();
        // keep only the component outside range(A)
        let ax = inst.a.matvec(inst.x_star.as_ref().unwrap()).unwrap();
        let w: Vec<f64> = inst.b.iter().zip(&ax).map(|(u, v)| u - v).collect();
        let r = lsq_solve(&inst.a, &w, &LsqConfig::default()).unwrap();
        assert!(r.x_ls.iter().all(|v| v.abs() < 1e-9));
    }
}
