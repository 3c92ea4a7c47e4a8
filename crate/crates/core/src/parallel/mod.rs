//! Multicore AsyRK: workers update a shared iterate with per-element atomic
//! additions and no locks, while a coordinator measures the residual
//! between phases.
//!
//! A phase is `snapshot_interval` epochs (`m` updates each) split evenly
//! over the workers. The coordinator measures once all workers have
//! finished their share, so recorded residuals are exact.

mod atomic;
mod gate;

pub use atomic::{AtomicF64, ComponentSums, IncrementSink};

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{check_len, Error, Result};
use crate::kaczmarz::{is_finite_record, measure, Hooks, RowSampler, ShuffledRows, Step, Variant};
use crate::rng::{seeded, subseed};
use crate::sparsemat::CsrMatrix;
use crate::trace::Trace;
use atomic::{shared_vector, snapshot, Worker};
use gate::Gate;

/// How a worker picks its next row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSelection {
    /// Uniform over all `m` rows, with replacement.
    WithReplacement,
    /// Rows split into one contiguous slice per worker; each worker scans
    /// its slice in an order reshuffled after every scan.
    SliceShuffle,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub threads: usize,
    /// `Gamma(g)` scales each component increment by `g θ_i`, so a full-row
    /// update with `Gamma(1.0)` over-relaxes by `θ_i`. `Projection` is the
    /// plain unit-relaxation row projection.
    pub step: Step,
    /// Maximum number of epochs.
    pub epochs: usize,
    pub target_r_sq: f64,
    pub variant: Variant,
    pub sampling: RowSelection,
    /// Worker `w` draws from `seed ^ w`.
    pub seed: u64,
    /// Epochs between residual measurements.
    pub snapshot_interval: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            threads: 1,
            step: Step::Projection,
            epochs: 100,
            target_r_sq: 0.0,
            variant: Variant::FullRow,
            sampling: RowSelection::SliceShuffle,
            seed: 0,
            snapshot_interval: 1,
        }
    }
}

impl RunConfig {
    fn validate(&self, m: usize) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        if self.snapshot_interval == 0 {
            return Err(Error::InvalidConfig("snapshot interval must be at least 1".into()));
        }
        if let Step::Gamma(g) = self.step {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidGamma(g));
            }
        }
        if self.sampling == RowSelection::SliceShuffle && m < self.threads {
            return Err(Error::InvalidConfig(format!(
                "slice sampling needs m >= threads ({m} < {})",
                self.threads
            )));
        }
        Ok(())
    }
}

/// Everything the workers applied during an instrumented run.
#[derive(Clone, Debug)]
pub struct UpdateAudit {
    /// Number of single-element increments applied.
    pub increments: u64,
    /// Per-component sum of the increments over all workers.
    pub sums: Vec<f64>,
}

pub fn solve_parallel(a: &CsrMatrix, b: &[f64], x0: &[f64], cfg: &RunConfig) -> Result<Trace> {
    solve_parallel_with(a, b, x0, cfg, Hooks::default())
}

pub fn solve_parallel_with(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &RunConfig,
    hooks: Hooks<'_>,
) -> Result<Trace> {
    run(a, b, x0, cfg, hooks, |_| ()).map(|(t, _)| t)
}

/// As [`solve_parallel`], with every increment also tallied per worker.
pub fn solve_instrumented(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &RunConfig,
) -> Result<(Trace, UpdateAudit)> {
    let n = a.ncols();
    let (trace, sinks) = run(a, b, x0, cfg, Hooks::default(), |_| ComponentSums::new(n))?;
    let mut audit = UpdateAudit {
        increments: 0,
        sums: vec![0.0; n],
    };
    for s in sinks {
        audit.increments += s.count;
        audit.sums.iter_mut().zip(&s.sums).for_each(|(a, b)| *a += b);
    }
    Ok((trace, audit))
}

fn slice_bounds(m: usize, threads: usize, w: usize) -> (usize, usize) {
    (w * m / threads, (w + 1) * m / threads)
}

/// Stops the workers however the coordinator exits.
struct StopOnDrop<'g>(&'g Gate);

impl Drop for StopOnDrop<'_> {
    fn drop(&mut self) {
        self.0.stop();
    }
}

fn run<S, F>(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &RunConfig,
    hooks: Hooks<'_>,
    make_sink: F,
) -> Result<(Trace, Vec<S>)>
where
    S: IncrementSink,
    F: Fn(usize) -> S,
{
    check_len("x0", x0.len(), a.ncols())?;
    check_len("b", b.len(), a.nrows())?;
    a.require_normalized()?;
    let m = a.nrows();
    cfg.validate(m)?;
    let threads = cfg.threads;

    let x = shared_vector(x0);
    let gate = Gate::default();
    let phase_updates = AtomicU64::new(0);
    let start = Instant::now();

    let mut workers = Vec::with_capacity(threads);
    for w in 0..threads {
        let sampler = match cfg.sampling {
            RowSelection::WithReplacement => RowSampler::Uniform(m),
            RowSelection::SliceShuffle => {
                let (lo, hi) = slice_bounds(m, threads, w);
                RowSampler::Shuffle(ShuffledRows::new((lo..hi).collect()))
            }
        };
        workers.push(Worker {
            sampler,
            rng: seeded(subseed(cfg.seed, w)),
            sink: make_sink(w),
        });
    }

    thread::scope(|s| {
        let stopper = StopOnDrop(&gate);
        let mut handles = Vec::with_capacity(threads);
        for (w, mut worker) in workers.into_iter().enumerate() {
            let (x, gate, phase_updates) = (&x, &gate, &phase_updates);
            let spawned = thread::Builder::new()
                .name(format!("asyrk-{w}"))
                .spawn_scoped(s, move || {
                    let mut seen = 0;
                    while let Some(phase) = gate.await_phase(seen) {
                        seen = phase;
                        let total = phase_updates.load(Ordering::Acquire);
                        let share = total / threads as u64 + u64::from((w as u64) < total % threads as u64);
                        worker.run(a, b, x, cfg.step, cfg.variant, share);
                        gate.finish();
                    }
                    worker.sink
                });
            match spawned {
                Ok(h) => handles.push(h),
                Err(e) => return Err(Error::ThreadSpawnFailure(e.to_string())),
            }
        }

        let mut updates = 0u64;
        let mut epochs_done = 0usize;
        let first = measure(a, b, x0, hooks.oracle, 0, start)?;
        let mut converged = first.r_sq <= cfg.target_r_sq || hooks.should_stop(x0);
        let mut records = vec![first];
        let mut current = x0.to_vec();
        while !converged && epochs_done < cfg.epochs {
            let chunk = cfg.snapshot_interval.min(cfg.epochs - epochs_done);
            let count = (chunk * m) as u64;
            phase_updates.store(count, Ordering::Release);
            gate.start_phase();
            gate.wait_finished(threads);
            updates += count;
            epochs_done += chunk;
            current = snapshot(&x);
            let rec = measure(a, b, &current, hooks.oracle, updates, start)?;
            if !is_finite_record(&rec, &current) {
                return Err(Error::NonFinite(updates));
            }
            converged = rec.r_sq <= cfg.target_r_sq || hooks.should_stop(&current);
            records.push(rec);
        }
        drop(stopper);
        let sinks = handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect();
        let trace = Trace {
            epochs: records,
            config_echo: json!({ "solver": "asyrk_parallel", "config": cfg }),
            final_x: current,
            converged,
        };
        Ok((trace, sinks))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupEntry {
    pub threads: usize,
    pub wall_seconds: f64,
    /// Epochs run until the target (or the epoch limit).
    pub epochs: usize,
    pub converged: bool,
    /// `wall(1) / wall(threads)`
    pub speedup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub target_r_sq: f64,
    pub entries: Vec<SpeedupEntry>,
}

/// Runs the solver once per thread count to `cfg.target_r_sq`.
pub fn sweep_threads(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &RunConfig,
    thread_list: &[usize],
) -> Result<SpeedupReport> {
    if !thread_list.contains(&1) {
        return Err(Error::InvalidConfig("thread list must contain 1".into()));
    }
    let mut runs = Vec::with_capacity(thread_list.len());
    for &t in thread_list {
        let trace = solve_parallel(a, b, x0, &RunConfig { threads: t, ..cfg.clone() })?;
        let last = trace.last().expect("trace has the initial record");
        runs.push((t, last.wall_seconds, last.epoch_index, trace.converged));
    }
    let base = runs
        .iter()
        .find(|r| r.0 == 1)
        .map(|r| r.1)
        .expect("checked above");
    let entries = runs
        .into_iter()
        .map(|(threads, wall, epochs, converged)| SpeedupEntry {
            threads,
            wall_seconds: wall,
            epochs,
            converged,
            speedup: if threads == 1 { 1.0 } else { base / wall },
        })
        .collect();
    Ok(SpeedupReport {
        target_r_sq: cfg.target_r_sq,
        entries,
    })
}
