//! Single-threaded simulator of the asynchronous iteration with an explicit
//! staleness model.
//!
//! Each step draws a row `i`, then (single-component variant) a component
//! `t`, then a delay, reads `x_{k(j)}` from a ring buffer of the last `τ + 1`
//! iterates and applies the update to `x_j`.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{check_len, Error, Result};
use crate::exec::Execution;
use crate::kaczmarz::{
    is_finite_record, measure, sampler_for, step_coefficient, RowSampler, Sampling, SolutionSet,
    Step, Touched, UpdateEvent, Variant,
};
use crate::rng::{seeded, subseed, SolverRng};
use crate::sparsemat::{ColumnIndex, CsrMatrix};
use crate::trace::Trace;

/// Distribution of the staleness `j - k(j)`. Every model clips `k(j)` at 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DelayModel {
    /// Always `d` iterations behind.
    Fixed { d: u32 },
    /// `j - k(j)` uniform on `0..=τ`.
    UniformRandom { tau: u32 },
    /// Always the oldest admissible iterate, `k(j) = j - τ`.
    MaxStaleness { tau: u32 },
}

impl DelayModel {
    pub fn tau(self) -> u32 {
        match self {
            DelayModel::Fixed { d } => d,
            DelayModel::UniformRandom { tau } | DelayModel::MaxStaleness { tau } => tau,
        }
    }

    #[inline]
    fn read_index(self, j: u64, rng: &mut SolverRng) -> u64 {
        let lag = match self {
            DelayModel::Fixed { d } => d as u64,
            DelayModel::MaxStaleness { tau } => tau as u64,
            DelayModel::UniformRandom { tau } => rng.random_range(0..=tau as u64),
        };
        j.saturating_sub(lag)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub step: Step,
    pub delay: DelayModel,
    pub iterations: u64,
    pub seed: u64,
    pub variant: Variant,
    pub sampling: Sampling,
    /// Iterations between trace records; `None` means one record per `m`.
    pub record_every: Option<u64>,
    /// Maximum number of update events kept for audit.
    pub event_cap: usize,
}

impl SimConfig {
    pub fn new(step: Step, delay: DelayModel, iterations: u64) -> Self {
        SimConfig {
            step,
            delay,
            iterations,
            seed: 0,
            variant: Variant::SingleComponent,
            sampling: Sampling::Uniform,
            record_every: None,
            event_cap: 10_000,
        }
    }
}

/// The last `τ + 1` iterates, stored densely.
#[derive(Clone, Debug)]
pub struct History {
    n: usize,
    depth: usize,
    slots: Vec<f64>,
    /// Index `j` of the newest iterate.
    newest: u64,
}

impl History {
    fn new(x0: &[f64], tau: u32) -> Self {
        let depth = tau as usize + 1;
        let mut slots = vec![0.0; depth * x0.len()];
        slots[..x0.len()].copy_from_slice(x0);
        History {
            n: x0.len(),
            depth,
            slots,
            newest: 0,
        }
    }

    fn slot(&self, k: u64) -> usize {
        (k % self.depth as u64) as usize * self.n
    }

    pub fn newest(&self) -> u64 {
        self.newest
    }

    pub fn current(&self) -> &[f64] {
        let s = self.slot(self.newest);
        &self.slots[s..s + self.n]
    }

    /// `x_k`, if it is still held.
    pub fn get(&self, k: u64) -> Option<&[f64]> {
        if k > self.newest || self.newest - k >= self.depth as u64 {
            return None;
        }
        let s = self.slot(k);
        Some(&self.slots[s..s + self.n])
    }

    /// Makes room for `x_{j+1}` as a copy of `x_j` and returns it.
    fn advance(&mut self) -> &mut [f64] {
        let from = self.slot(self.newest);
        self.newest += 1;
        let to = self.slot(self.newest);
        if from != to {
            self.slots.copy_within(from..from + self.n, to);
        }
        &mut self.slots[to..to + self.n]
    }
}

/// `r = A x - b`, kept current under sparse updates of `x`.
struct ResidualTracker<'c> {
    cols: &'c ColumnIndex,
    r: Vec<f64>,
    since_sync: u64,
}

impl<'c> ResidualTracker<'c> {
    fn new(cols: &'c ColumnIndex, a: &CsrMatrix, b: &[f64], x: &[f64]) -> Self {
        let mut t = ResidualTracker {
            cols,
            r: vec![0.0; a.nrows()],
            since_sync: 0,
        };
        t.sync(a, b, x);
        t
    }

    fn sync(&mut self, a: &CsrMatrix, b: &[f64], x: &[f64]) {
        for i in 0..a.nrows() {
            self.r[i] = a.row_dot(i, x) - b[i];
        }
        self.since_sync = 0;
    }

    #[inline]
    fn add_column(&mut self, t: usize, delta: f64) {
        let (rows, vals) = self.cols.column(t);
        for (&i, &v) in rows.iter().zip(vals) {
            self.r[i] += delta * v;
        }
    }

    fn r_sq(&self) -> f64 {
        self.r.iter().map(|v| v * v).sum()
    }
}

/// Step-by-step executor of the delayed recursion.
pub struct Simulator<'a> {
    a: &'a CsrMatrix,
    b: &'a [f64],
    step: Step,
    delay: DelayModel,
    variant: Variant,
    sampler: RowSampler,
    rng: SolverRng,
    history: History,
    tracker: Option<ResidualTracker<'a>>,
}

impl<'a> Simulator<'a> {
    pub fn new(a: &'a CsrMatrix, b: &'a [f64], x0: &[f64], cfg: &SimConfig) -> Result<Self> {
        check_len("x0", x0.len(), a.ncols())?;
        check_len("b", b.len(), a.nrows())?;
        a.require_normalized()?;
        let step = cfg.step.validate()?;
        Ok(Simulator {
            a,
            b,
            step,
            delay: cfg.delay,
            variant: cfg.variant,
            sampler: sampler_for(a, cfg.sampling)?,
            rng: seeded(cfg.seed),
            history: History::new(x0, cfg.delay.tau()),
            tracker: None,
        })
    }

    /// Maintains `A x - b` incrementally so that [`Self::r_sq`] costs O(m).
    pub fn track_residual(mut self, cols: &'a ColumnIndex) -> Self {
        self.tracker = Some(ResidualTracker::new(cols, self.a, self.b, self.history.current()));
        self
    }

    pub fn iteration(&self) -> u64 {
        self.history.newest()
    }

    pub fn current(&self) -> &[f64] {
        self.history.current()
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// `||A x_j - b||^2` from the tracked residual, or computed directly.
    pub fn r_sq(&self) -> f64 {
        match &self.tracker {
            Some(t) => t.r_sq(),
            None => crate::sparsemat::residual_sq(self.a, self.current(), self.b),
        }
    }

    /// Performs `x_j -> x_{j+1}`.
    pub fn step(&mut self) -> UpdateEvent {
        let a = self.a;
        let j = self.history.newest();
        let i = self.sampler.next(&mut self.rng);
        let row = a.row(i);
        let touched = match self.variant {
            Variant::SingleComponent => Touched::One(self.rng.random_range(0..row.len())),
            Variant::FullRow => Touched::All,
        };
        let k = self.delay.read_index(j, &mut self.rng);
        let x_read = self.history.get(k).expect("delay model stays within history");
        let resid = a.row_dot(i, x_read) - self.b[i];
        let c = step_coefficient(self.step, row.len(), a.row_norm_sq(i), resid);

        let x = self.history.advance();
        match touched {
            Touched::One(pos) => {
                let delta = c * row.vals[pos];
                x[row.cols[pos]] += delta;
                if let Some(t) = &mut self.tracker {
                    t.add_column(row.cols[pos], delta);
                }
            }
            Touched::All => {
                for p in 0..row.cols.len() {
                    x[row.cols[p]] += c * row.vals[p];
                }
                if let Some(t) = &mut self.tracker {
                    for p in 0..row.cols.len() {
                        t.add_column(row.cols[p], c * row.vals[p]);
                    }
                }
            }
        }
        if let Some(t) = &mut self.tracker {
            t.since_sync += 1;
            if t.since_sync >= a.nrows() as u64 {
                t.sync(a, self.b, self.history.current());
            }
        }
        let t = match touched {
            Touched::One(pos) => Touched::One(row.cols[pos]),
            Touched::All => Touched::All,
        };
        UpdateEvent { j, i, t, k, step: c }
    }
}

#[derive(Clone, Debug)]
pub struct SimRun {
    pub trace: Trace,
    /// The first `event_cap` update events.
    pub events: Vec<UpdateEvent>,
    pub history: History,
    pub step: Step,
}

/// Runs exactly `cfg.iterations` updates, recording the trace every
/// `record_every` iterations and after the last one.
pub fn simulate(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &SimConfig,
    oracle: Option<&SolutionSet>,
) -> Result<SimRun> {
    let mut sim = Simulator::new(a, b, x0, cfg)?;
    let every = cfg.record_every.unwrap_or(a.nrows() as u64).max(1);
    let start = Instant::now();
    let mut epochs = vec![measure(a, b, sim.current(), oracle, 0, start)?];
    let mut events = Vec::with_capacity(cfg.event_cap.min(cfg.iterations as usize));
    for j in 1..=cfg.iterations {
        let ev = sim.step();
        if events.len() < cfg.event_cap {
            events.push(ev);
        }
        if j % every == 0 || j == cfg.iterations {
            let rec = measure(a, b, sim.current(), oracle, j, start)?;
            if !is_finite_record(&rec, sim.current()) {
                return Err(Error::NonFinite(j));
            }
            epochs.push(rec);
        }
    }
    let final_x = sim.current().to_vec();
    Ok(SimRun {
        trace: Trace {
            epochs,
            config_echo: json!({ "solver": "delay_sim", "config": cfg }),
            final_x,
            converged: false,
        },
        events,
        history: sim.history,
        step: cfg.step,
    })
}

#[derive(Clone, Debug)]
pub struct McConfig {
    pub sim: SimConfig,
    /// Independent replicates; replicate `r` uses seed `subseed(sim.seed, r)`.
    pub runs: usize,
    /// Iterations between recorded points.
    pub stride: u64,
    pub exec: Execution,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McResult {
    pub runs: usize,
    /// Iteration index of every recorded point.
    pub iterations: Vec<u64>,
    /// Sample mean of `||A x_j - b||^2`.
    pub mean_r_sq: Vec<f64>,
    /// `mean_r_sq[p + 1] / mean_r_sq[p]`.
    pub ratios: Vec<f64>,
    /// Sample mean of the squared distance to the solution set.
    pub mean_dist_sq: Option<Vec<f64>>,
}

/// Estimates `E ||A x_j - b||^2` (and `E dist^2` with an oracle) by
/// averaging independent simulator runs.
pub fn monte_carlo_ratios(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &McConfig,
    oracle: Option<&SolutionSet>,
) -> Result<McResult> {
    if cfg.runs < 100 {
        return Err(Error::InvalidConfig(format!(
            "Monte Carlo needs at least 100 runs, got {}",
            cfg.runs
        )));
    }
    let stride = cfg.stride.max(1);
    let iterations: Vec<u64> = (0..=cfg.sim.iterations).step_by(stride as usize).collect();
    let points = iterations.len();
    // validate once up front so replicates cannot fail
    Simulator::new(a, b, x0, &cfg.sim)?;
    let cols = a.columns();

    let sums = cfg.exec.sum_vectors(cfg.runs, |r| {
        let run_cfg = SimConfig {
            seed: subseed(cfg.sim.seed, r),
            ..cfg.sim.clone()
        };
        let mut sim = Simulator::new(a, b, x0, &run_cfg)
            .expect("validated")
            .track_residual(&cols);
        let width = if oracle.is_some() { 2 } else { 1 };
        let mut out = vec![0.0; width * points];
        let mut record = |p: usize, sim: &Simulator| {
            out[p] = sim.r_sq();
            if let Some(o) = oracle {
                out[points + p] = o.dist_sq(sim.current());
            }
        };
        record(0, &sim);
        for (p, &target) in iterations.iter().enumerate().skip(1) {
            while sim.iteration() < target {
                sim.step();
            }
            record(p, &sim);
        }
        out
    });

    let runs = cfg.runs as f64;
    let mean_r_sq: Vec<f64> = sums[..points].iter().map(|s| s / runs).collect();
    if mean_r_sq.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(cfg.sim.iterations));
    }
    let ratios = mean_r_sq.windows(2).map(|w| w[1] / w[0]).collect();
    let mean_dist_sq = oracle.map(|_| sums[points..].iter().map(|s| s / runs).collect());
    Ok(McResult {
        runs: cfg.runs,
        iterations,
        mean_r_sq,
        ratios,
        mean_dist_sq,
    })
}

/// Squared distance to the solution set after `cfg.iterations` updates,
/// one entry per replicate.
pub fn final_dist_sq(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &SimConfig,
    runs: usize,
    oracle: &SolutionSet,
    exec: Execution,
) -> Result<Vec<f64>> {
    Simulator::new(a, b, x0, cfg)?;
    let d = exec.map(runs, |r| {
        let run_cfg = SimConfig {
            seed: subseed(cfg.seed, r),
            ..cfg.clone()
        };
        let mut sim = Simulator::new(a, b, x0, &run_cfg).expect("validated");
        for _ in 0..cfg.iterations {
            sim.step();
        }
        oracle.dist_sq(sim.current())
    });
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(cfg.iterations));
    }
    Ok(d)
}

/// Least-squares line through `(x, log y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Fitted change of `log y` per unit `x`.
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 for a constant sequence.
    pub r2: f64,
}

/// Fits `log values[j]` against `j`.
pub fn rate_fit(values: &[f64]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = values.iter().enumerate().map(|(j, &v)| (j as f64, v)).collect();
    rate_fit_points(&pts)
}

pub fn rate_fit_points(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 20 {
        return Err(Error::InvalidConfig(format!(
            "rate fit needs at least 20 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(_, y)| !(y > 0.0) || !y.is_finite()) {
        return Err(Error::NonPositiveData);
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y.ln() - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let ss_res = syy - slope * sxy;
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}
