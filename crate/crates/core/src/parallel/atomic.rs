//! Lock-free shared vector and the per-worker update loop.
//!
//! Nothing in this file may take a lock: reads of the shared iterate are
//! relaxed element loads and writes are single-element CAS additions.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::kaczmarz::{step_coefficient, RowSampler, Step, Variant};
use crate::rng::SolverRng;
use crate::sparsemat::CsrMatrix;

/// `f64` with an atomic add built from a compare-and-swap loop on its bits.
#[derive(Debug, Default)]
#[repr(transparent)]
pub struct AtomicF64(AtomicU64);

impl AtomicF64 {
    pub fn new(v: f64) -> Self {
        AtomicF64(AtomicU64::new(v.to_bits()))
    }

    #[inline]
    pub fn load(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    pub fn store(&self, v: f64) {
        self.0.store(v.to_bits(), Ordering::Relaxed)
    }

    /// Adds `delta` exactly once and returns the previous value.
    #[inline]
    pub fn fetch_add(&self, delta: f64) -> f64 {
        let mut cur = self.0.load(Ordering::Relaxed);
        loop {
            let next = (f64::from_bits(cur) + delta).to_bits();
            match self
                .0
                .compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed)
            {
                Ok(prev) => return f64::from_bits(prev),
                Err(actual) => cur = actual,
            }
        }
    }
}

pub fn shared_vector(x: &[f64]) -> Vec<AtomicF64> {
    x.iter().map(|&v| AtomicF64::new(v)).collect()
}

pub fn snapshot(x: &[AtomicF64]) -> Vec<f64> {
    x.iter().map(AtomicF64::load).collect()
}

/// Observer of every increment a worker applies.
pub trait IncrementSink: Send {
    fn record(&mut self, t: usize, delta: f64);
}

impl IncrementSink for () {
    #[inline(always)]
    fn record(&mut self, _: usize, _: f64) {}
}

/// Per-component totals of the increments one worker applied.
#[derive(Clone, Debug)]
pub struct ComponentSums {
    pub sums: Vec<f64>,
    pub count: u64,
}

impl ComponentSums {
    pub fn new(n: usize) -> Self {
        ComponentSums {
            sums: vec![0.0; n],
            count: 0,
        }
    }
}

impl IncrementSink for ComponentSums {
    #[inline]
    fn record(&mut self, t: usize, delta: f64) {
        self.sums[t] += delta;
        self.count += 1;
    }
}

pub struct Worker<S> {
    pub sampler: RowSampler,
    pub rng: SolverRng,
    pub sink: S,
}

impl<S: IncrementSink> Worker<S> {
    /// Performs `count` updates against the shared iterate.
    pub fn run(&mut self, a: &CsrMatrix, b: &[f64], x: &[AtomicF64], step: Step, variant: Variant, count: u64) {
        for _ in 0..count {
            let i = self.sampler.next(&mut self.rng);
            let row = a.row(i);
            let pick = match variant {
                Variant::SingleComponent => Some(self.rng.random_range(0..row.len())),
                Variant::FullRow => None,
            };
            let resid = a.row_dot_with(i, |c| x[c].load()) - b[i];
            let c = step_coefficient(step, row.len(), a.row_norm_sq(i), resid);
            match pick {
                Some(p) => {
                    let d = c * row.vals[p];
                    x[row.cols[p]].fetch_add(d);
                    self.sink.record(row.cols[p], d);
                }
                None => {
                    for p in 0..row.cols.len() {
                        let d = c * row.vals[p];
                        x[row.cols[p]].fetch_add(d);
                        self.sink.record(row.cols[p], d);
                    }
                }
            }
        }
    }
}
