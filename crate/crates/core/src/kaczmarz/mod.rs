//! Serial randomized Kaczmarz and the single-component asynchronous update
//! kernel shared by the delay simulator and the multicore executor.

mod projection;
mod sampler;

pub use projection::{project_solution_set, SolutionSet};
pub use sampler::{RowSampler, ShuffledRows};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{check_len, Error, Result};
use crate::rng::seeded;
use crate::sparsemat::{residuals, CsrMatrix};
use crate::trace::{EpochRecord, Trace};

/// Row selection rule for the serial solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Uniform with replacement; requires normalized rows.
    Uniform,
    /// With replacement, proportional to squared row norms (alias table).
    NormProportional,
    /// Without replacement, reshuffled after every scan of the rows.
    Shuffle,
}

/// How the scalar multiplier of an update is formed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    /// The exact projection onto the row's hyperplane: `-(a_i^T x - b_i) / ||a_i||^2`.
    Projection,
    /// The asynchronous step `-γ θ_i (a_i^T x - b_i)`.
    Gamma(f64),
}

impl Step {
    pub fn validate(self) -> Result<Self> {
        match self {
            Step::Gamma(g) if !(g >= 0.0 && g.is_finite()) => Err(Error::InvalidGamma(g)),
            s => Ok(s),
        }
    }
}

/// Which components a single update event touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One component `t` drawn uniformly from `supp(a_i)`.
    SingleComponent,
    /// Every component of `supp(a_i)`, all from the same read.
    FullRow,
}

/// Component(s) changed by an update event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Touched {
    One(usize),
    All,
}

/// Audit record of one update `x_{j+1} = x_j + step * P a_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub j: u64,
    pub i: usize,
    pub t: Touched,
    /// Index of the iterate the residual was read from.
    pub k: u64,
    /// Scalar multiplier; component `t` moves by `step * (a_i)_t`.
    pub step: f64,
}

/// Multiplier `c` such that the update adds `c * (a_i)_t` to component `t`.
#[inline]
pub(crate) fn step_coefficient(step: Step, theta: usize, norm_sq: f64, residual: f64) -> f64 {
    match step {
        Step::Projection => -(residual / norm_sq),
        Step::Gamma(g) => -(g * theta as f64 * residual),
    }
}

/// One Kaczmarz projection applied in place.
#[inline]
pub fn rk_step_mut(a: &CsrMatrix, b: &[f64], x: &mut [f64], i: usize) {
    let resid = a.row_dot(i, x) - b[i];
    let c = step_coefficient(Step::Projection, a.row_nnz(i), a.row_norm_sq(i), resid);
    let row = a.row(i);
    for k in 0..row.cols.len() {
        x[row.cols[k]] += c * row.vals[k];
    }
}

/// Orthogonal projection of `x` onto the hyperplane `a_i^T z = b_i`.
pub fn rk_step(a: &CsrMatrix, b: &[f64], x: &[f64], i: usize) -> Result<Vec<f64>> {
    check_len("x", x.len(), a.ncols())?;
    check_len("b", b.len(), a.nrows())?;
    if i >= a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "row {i} out of range for {} rows",
            a.nrows()
        )));
    }
    let mut out = x.to_vec();
    rk_step_mut(a, b, &mut out, i);
    Ok(out)
}

/// Increment `-γ θ_i (a_i)_t (a_i^T x_read - b_i)` for component `t`.
///
/// Pure: the caller applies the returned value to component `t` of the live
/// vector.
pub fn asyrk_update(
    a: &CsrMatrix,
    b: &[f64],
    i: usize,
    t: usize,
    gamma: f64,
    x_read: &[f64],
) -> Result<f64> {
    check_len("x_read", x_read.len(), a.ncols())?;
    let row = a.row(i);
    let pos = row
        .position(t)
        .ok_or(Error::ComponentNotInSupport { row: i, t })?;
    let resid = a.row_dot(i, x_read) - b[i];
    let c = step_coefficient(Step::Gamma(gamma), row.len(), a.row_norm_sq(i), resid);
    Ok(c * row.vals[pos])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RkConfig {
    pub max_epochs: usize,
    pub target_r_sq: f64,
    pub seed: u64,
    pub sampling: Sampling,
}

impl Default for RkConfig {
    fn default() -> Self {
        RkConfig {
            max_epochs: 100,
            target_r_sq: 0.0,
            seed: 0,
            sampling: Sampling::Uniform,
        }
    }
}

pub type StopRule = dyn Fn(&[f64]) -> bool + Sync;

/// Optional observers for a solver run.
#[derive(Clone, Copy, Default)]
pub struct Hooks<'a> {
    /// Enables `dist_sq` in every record.
    pub oracle: Option<&'a SolutionSet>,
    /// Extra stopping rule evaluated on the iterate at each record.
    pub stop: Option<&'a StopRule>,
}

impl Hooks<'_> {
    pub(crate) fn should_stop(&self, x: &[f64]) -> bool {
        self.stop.is_some_and(|f| f(x))
    }
}

pub(crate) fn measure(
    a: &CsrMatrix,
    b: &[f64],
    x: &[f64],
    oracle: Option<&SolutionSet>,
    updates: u64,
    start: Instant,
) -> Result<EpochRecord> {
    let res = residuals(a, x, b)?;
    Ok(EpochRecord {
        epoch_index: (updates / a.nrows() as u64) as usize,
        n_epochs: updates as f64 / a.ncols() as f64,
        r_sq: res.r_sq,
        grad_sq: res.grad_sq,
        dist_sq: oracle.map(|o| o.dist_sq(x)),
        wall_seconds: start.elapsed().as_secs_f64(),
        updates_applied: updates,
    })
}

pub(crate) fn is_finite_record(rec: &EpochRecord, x: &[f64]) -> bool {
    rec.r_sq.is_finite() && x.iter().all(|v| v.is_finite())
}

pub(crate) fn sampler_for(a: &CsrMatrix, sampling: Sampling) -> Result<RowSampler> {
    match sampling {
        Sampling::Uniform => {
            a.require_normalized()?;
            Ok(RowSampler::Uniform(a.nrows()))
        }
        Sampling::Shuffle => {
            a.require_normalized()?;
            Ok(RowSampler::Shuffle(ShuffledRows::new((0..a.nrows()).collect())))
        }
        Sampling::NormProportional => RowSampler::norm_proportional(a),
    }
}

/// Serial randomized Kaczmarz: `m` projections per epoch, one record per
/// epoch, stopping at `target_r_sq` or after `max_epochs`.
pub fn rk_solve(a: &CsrMatrix, b: &[f64], x0: &[f64], cfg: &RkConfig) -> Result<Trace> {
    rk_solve_with(a, b, x0, cfg, Hooks::default())
}

pub fn rk_solve_with(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &RkConfig,
    hooks: Hooks<'_>,
) -> Result<Trace> {
    check_len("x0", x0.len(), a.ncols())?;
    check_len("b", b.len(), a.nrows())?;
    let mut sampler = sampler_for(a, cfg.sampling)?;
    let mut rng = seeded(cfg.seed);
    let m = a.nrows() as u64;
    let start = Instant::now();
    let mut x = x0.to_vec();
    let mut updates = 0u64;

    let first = measure(a, b, &x, hooks.oracle, 0, start)?;
    let mut converged = first.r_sq <= cfg.target_r_sq || hooks.should_stop(&x);
    let mut epochs = vec![first];
    while !converged && epochs.len() <= cfg.max_epochs {
        for _ in 0..m {
            let i = sampler.next(&mut rng);
            rk_step_mut(a, b, &mut x, i);
        }
        updates += m;
        let rec = measure(a, b, &x, hooks.oracle, updates, start)?;
        if !is_finite_record(&rec, &x) {
            return Err(Error::NonFinite(updates));
        }
        converged = rec.r_sq <= cfg.target_r_sq || hooks.should_stop(&x);
        epochs.push(rec);
    }

    Ok(Trace {
        epochs,
        config_echo: json!({ "solver": "rk", "config": cfg }),
        final_x: x,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsemat::{normalize_rows, DEFAULT_DENSE_CAP};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity(n: usize) -> CsrMatrix {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        CsrMatrix::from_triplets(&t, n, n).unwrap()
    }

    fn random_system(seed: u64, m: usize, n: usize, density: f64) -> (CsrMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..m {
            let forced = rng.random_range(0..n);
            for j in 0..n {
                if j == forced || rng.random::<f64>() < density {
                    t.push((i, j, rng.random_range(-1.0..1.0)));
                }
            }
        }
        let a = CsrMatrix::from_triplets(&t, m, n).unwrap();
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = a.matvec(&xs).unwrap();
        normalize_rows(&a, &b).unwrap()
    }

    #[test]
    fn unit_projection_examples() {
        let a = identity(2);
        assert_eq!(rk_step(&a, &[1.0, 0.0], &[0.0, 0.0], 0).unwrap(), vec![1.0, 0.0]);
        // already on the hyperplane
        assert_eq!(rk_step(&a, &[1.0, 0.0], &[1.0, 5.0], 0).unwrap(), vec![1.0, 5.0]);
        let a = CsrMatrix::from_triplets(&[(0, 0, 0.6), (0, 1, 0.8)], 1, 2).unwrap();
        let x = rk_step(&a, &[2.0], &[0.0, 0.0], 0).unwrap();
        assert!((x[0] - 1.2).abs() < 1e-15 && (x[1] - 1.6).abs() < 1e-15);
    }

    #[test]
    fn asyrk_update_examples() {
        let a = identity(2);
        assert_eq!(asyrk_update(&a, &[1.0, 0.0], 0, 0, 1.0, &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(asyrk_update(&a, &[1.0, 0.0], 0, 0, 1.0, &[1.0, 0.0]).unwrap(), 0.0);
        let h = 0.5f64.sqrt();
        let a = CsrMatrix::from_triplets(&[(0, 0, h), (0, 1, h)], 1, 2).unwrap();
        let d = asyrk_update(&a, &[0.0], 0, 1, 0.5, &[1.0, 0.0]).unwrap();
        assert!((d + 0.5).abs() < 1e-15);
        let a = CsrMatrix::from_triplets(&[(0, 0, 1.0)], 1, 2).unwrap();
        assert!(matches!(
            asyrk_update(&a, &[0.0], 0, 1, 0.5, &[1.0, 0.0]),
            Err(Error::ComponentNotInSupport { row: 0, t: 1 })
        ));
    }

    #[test]
    fn already_solved_stops_at_epoch_zero() {
        let (a, b) = random_system(1, 30, 10, 0.3);
        let xs = SolutionSet::new(&a, &b, DEFAULT_DENSE_CAP).unwrap().min_norm_solution().to_vec();
        let b_exact = a.matvec(&xs).unwrap();
        let t = rk_solve(&a, &b_exact, &xs, &RkConfig { target_r_sq: 0.0, ..Default::default() }).unwrap();
        assert_eq!(t.epochs.len(), 1);
        assert_eq!(t.epochs[0].r_sq, 0.0);
        assert!(t.converged);
    }

    #[test]
    fn orthogonal_rows_converge_once_all_visited() {
        let n = 20;
        let a = identity(n);
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 3.5).collect();
        let cfg = RkConfig { max_epochs: 10, target_r_sq: 0.0, seed: 3, sampling: Sampling::Shuffle };
        let t = rk_solve(&a, &b, &vec![0.0; n], &cfg).unwrap();
        assert_eq!(t.epochs.len(), 2);
        assert_eq!(t.epochs[1].r_sq, 0.0);
        assert_eq!(t.final_x, b);
    }

    #[test]
    fn uniform_requires_normalized() {
        let a = CsrMatrix::from_triplets(&[(0, 0, 2.0)], 1, 1).unwrap();
        assert!(matches!(
            rk_solve(&a, &[1.0], &[0.0], &RkConfig::default()),
            Err(Error::NotNormalized)
        ));
        // norm-proportional sampling handles unnormalized rows
        let cfg = RkConfig { sampling: Sampling::NormProportional, max_epochs: 2, ..Default::default() };
        let t = rk_solve(&a, &[1.0], &[0.0], &cfg).unwrap();
        assert_eq!(t.final_x, vec![0.5]);
    }

    #[test]
    fn seeded_runs_are_bit_reproducible() {
        let (a, b) = random_system(2, 60, 40, 0.2);
        for sampling in [Sampling::Uniform, Sampling::Shuffle, Sampling::NormProportional] {
            let cfg = RkConfig { max_epochs: 5, target_r_sq: 0.0, seed: 99, sampling };
            let t1 = rk_solve(&a, &b, &vec![0.0; 40], &cfg).unwrap();
            let t2 = rk_solve(&a, &b, &vec![0.0; 40], &cfg).unwrap();
            assert!(t1.same_numerics(&t2));
            assert!(t1.epochs.windows(2).all(|w| w[0].epoch_index < w[1].epoch_index));
        }
    }

    #[test]
    fn nonfinite_is_reported() {
        let a = identity(2);
        let t = rk_solve(&a, &[f64::NAN, 1.0], &[0.0, 0.0], &RkConfig::default());
        assert!(matches!(t, Err(Error::NonFinite(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn step_is_orthogonal_projection(seed in any::<u64>(), row in 0usize..25) {
            let (a, b) = random_system(seed, 25, 15, 0.3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let x: Vec<f64> = (0..15).map(|_| rng.random_range(-2.0..2.0)).collect();
            let xn = rk_step(&a, &b, &x, row).unwrap();
            prop_assert!((a.row_dot(row, &xn) - b[row]).abs() < 1e-10);
            // the move is parallel to a_i, hence orthogonal to its null space
            let d: Vec<f64> = xn.iter().zip(&x).map(|(p, q)| p - q).collect();
            let along = a.row_dot(row, &d);
            let dn: f64 = d.iter().map(|v| v * v).sum();
            prop_assert!((along * along - dn).abs() < 1e-10 * dn.max(1.0));
            // never moves away from the nearest solution
            let set = SolutionSet::new(&a, &b, DEFAULT_DENSE_CAP).unwrap();
            let xs = set.project(&x);
            let before: f64 = x.iter().zip(&xs).map(|(p, q)| (p - q).powi(2)).sum();
            let after: f64 = xn.iter().zip(&xs).map(|(p, q)| (p - q).powi(2)).sum();
            prop_assert!(after <= before + 1e-12);
        }

        #[test]
        fn summed_async_updates_reproduce_projection(seed in any::<u64>(), row in 0usize..25) {
            let (a, b) = random_system(seed, 25, 15, 0.3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
            let x: Vec<f64> = (0..15).map(|_| rng.random_range(-2.0..2.0)).collect();
            let theta = a.row_nnz(row) as f64;
            let mut y = x.clone();
            for (t, _) in a.row(row).iter() {
                y[t] += asyrk_update(&a, &b, row, t, 1.0 / theta, &x).unwrap();
            }
            let z = rk_step(&a, &b, &x, row).unwrap();
            for (p, q) in y.iter().zip(&z) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
