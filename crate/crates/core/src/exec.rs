//! Data-parallel execution over independent replicates.
//!
//! With the `parallel` feature (default) replicates are spread over the
//! rayon pool; without it, or with [`Execution::Sequential`], they run in
//! order on the calling thread. Results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Replicates summed per chunk before the (ordered) final reduction.
const CHUNK: usize = 8;

impl Execution {
    /// `f(0), f(1), ..., f(count - 1)` in index order.
    pub fn map<T, F>(self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..count).into_par_iter().map(f).collect(),
            _ => (0..count).map(f).collect(),
        }
    }

    /// Element-wise sum of `f(r)` over `r in 0..count`.
    ///
    /// Chunks are fixed-size and combined in index order, so the floating
    /// point result does not depend on the thread pool.
    pub fn sum_vectors<F>(self, count: usize, f: F) -> Vec<f64>
    where
        F: Fn(usize) -> Vec<f64> + Sync + Send,
    {
        let chunks = count.div_ceil(CHUNK);
        let partial = self.map(chunks, |c| {
            let mut acc: Vec<f64> = Vec::new();
            for r in c * CHUNK..((c + 1) * CHUNK).min(count) {
                add_into(&mut acc, &f(r));
            }
            acc
        });
        let mut total = Vec::new();
        for p in &partial {
            add_into(&mut total, p);
        }
        total
    }
}

fn add_into(acc: &mut Vec<f64>, v: &[f64]) {
    if acc.is_empty() {
        acc.extend_from_slice(v);
    } else {
        assert_eq!(acc.len(), v.len(), "replicates must return equal lengths");
        acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
}
