use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dense::{nonzero_singular_values, DEFAULT_DENSE_CAP};
use super::CsrMatrix;
use crate::error::{Error, Result};

/// Derived scalars of a row-normalized system matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemStats {
    pub m: usize,
    pub n: usize,
    /// Fraction of nonzero entries, `nnz / (m n)`.
    pub delta: f64,
    /// Per-row nonzero counts θ_i.
    pub theta: Vec<usize>,
    /// `max_i θ_i`
    pub mu: usize,
    /// Largest column nonzero count.
    pub nu: usize,
    /// `max_{i,t} || A θ_i P_t a_i ||`
    pub alpha: f64,
    /// Smallest nonzero eigenvalue of `A^T A`; `None` when not computed.
    pub lambda_min: Option<f64>,
    pub lambda_max: f64,
    pub frob_sq: f64,
    /// Largest diagonal entry of `A^T A`.
    pub l_max: f64,
    /// Largest row norm of `A^T A`.
    pub l_res: f64,
    /// Smallest nonzero singular value, `sqrt(lambda_min)`.
    pub sigma_r: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct StatsOptions {
    /// Use a dense SVD for both spectral ends. Otherwise only `lambda_max`
    /// is estimated, by power iteration.
    pub exact_spectral: bool,
    /// Relative eigen-residual tolerance for power iteration.
    pub tol: f64,
    pub max_iter: usize,
    pub dense_cap: usize,
    pub seed: u64,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions {
            exact_spectral: false,
            tol: 1e-8,
            max_iter: 100_000,
            dense_cap: DEFAULT_DENSE_CAP,
            seed: 0x5eed,
        }
    }
}

impl StatsOptions {
    pub fn exact() -> Self {
        StatsOptions {
            exact_spectral: true,
            ..Default::default()
        }
    }
}

impl SystemStats {
    pub fn require_lambda_min(&self) -> Result<f64> {
        match self.lambda_min {
            Some(l) if l > 0.0 => Ok(l),
            _ => Err(Error::ZeroLambdaMin),
        }
    }
}

pub fn compute_stats(a: &CsrMatrix, opts: &StatsOptions) -> Result<SystemStats> {
    a.require_normalized()?;
    let (m, n) = (a.nrows(), a.ncols());
    let theta: Vec<usize> = (0..m).map(|i| a.row_nnz(i)).collect();
    let mu = theta.iter().copied().max().unwrap_or(0);
    let nu = a.column_counts().into_iter().max().unwrap_or(0);
    let col_sq = a.column_norms_sq();
    let l_max = col_sq.iter().copied().fold(0.0, f64::max);

    // ||A θ_i (a_i)_t e_t|| = θ_i |(a_i)_t| ||ā_t||
    let mut alpha: f64 = 0.0;
    for i in 0..m {
        let th = theta[i] as f64;
        for (c, v) in a.row(i).iter() {
            alpha = alpha.max(th * v.abs() * col_sq[c].sqrt());
        }
    }

    let l_res = gram_max_row_norm(a);

    let (lambda_min, lambda_max) = if opts.exact_spectral {
        let sv = nonzero_singular_values(a, opts.dense_cap)?;
        let lmax = sv.first().map(|s| s * s).unwrap_or(0.0);
        let lmin = sv.last().map(|s| s * s);
        (lmin, lmax)
    } else {
        (None, lambda_max_power(a, opts.tol, opts.max_iter, opts.seed)?)
    };

    Ok(SystemStats {
        m,
        n,
        delta: a.nnz() as f64 / (m as f64 * n as f64),
        theta,
        mu,
        nu,
        alpha,
        lambda_min,
        lambda_max,
        frob_sq: a.frob_sq(),
        l_max,
        l_res,
        sigma_r: lambda_min.map(f64::sqrt),
    })
}

/// Largest Euclidean norm over the rows of `A^T A`, built one column at a time.
fn gram_max_row_norm(a: &CsrMatrix) -> f64 {
    let cols = a.columns();
    let mut acc = vec![0.0; a.ncols()];
    let mut touched = Vec::new();
    let mut best: f64 = 0.0;
    for j in 0..a.ncols() {
        let (rows, vals) = cols.column(j);
        for (&i, &v) in rows.iter().zip(vals) {
            for (c, w) in a.row(i).iter() {
                if acc[c] == 0.0 {
                    touched.push(c);
                }
                acc[c] += v * w;
            }
        }
        let norm_sq: f64 = touched.iter().map(|&c| acc[c] * acc[c]).sum();
        best = best.max(norm_sq.sqrt());
        for &c in &touched {
            acc[c] = 0.0;
        }
        touched.clear();
    }
    best
}

/// Largest eigenvalue of `A^T A` by power iteration.
///
/// Stops once `||A^T A v - λ v|| <= tol * λ` for the unit iterate `v`, which
/// bounds the distance from λ to the spectrum by `tol * λ`.
pub fn lambda_max_power(a: &CsrMatrix, tol: f64, max_iter: usize, seed: u64) -> Result<f64> {
    let n = a.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    for _ in 0..max_iter {
        let w = a.matvec(&v)?;
        let lambda: f64 = w.iter().map(|x| x * x).sum();
        let y = a.matvec_t(&w)?;
        if lambda == 0.0 {
            return Ok(0.0);
        }
        let resid: f64 = y
            .iter()
            .zip(&v)
            .map(|(yi, vi)| (yi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if !lambda.is_finite() {
            break;
        }
        if resid <= tol * lambda {
            return Ok(lambda);
        }
        v = y;
        normalize(&mut v);
    }
    Err(Error::PowerIterationDiverged(max_iter))
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}
