use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::rng::SolverRng;
use crate::sparsemat::CsrMatrix;

/// Source of row indices for one solver stream.
#[derive(Clone, Debug)]
pub enum RowSampler {
    /// Uniform with replacement over `0..m`.
    Uniform(usize),
    /// With replacement, probability `||a_i||^2 / ||A||_F^2`.
    Alias(WeightedAliasIndex<f64>),
    /// Without replacement: a fixed set of rows visited in an order that is
    /// reshuffled at the start of every scan.
    Shuffle(ShuffledRows),
}

impl RowSampler {
    pub fn norm_proportional(a: &CsrMatrix) -> Result<Self> {
        let w: Vec<f64> = (0..a.nrows()).map(|i| a.row_norm_sq(i)).collect();
        WeightedAliasIndex::new(w)
            .map(RowSampler::Alias)
            .map_err(|e| Error::InvalidConfig(format!("row weights: {e}")))
    }

    #[inline]
    pub fn next(&mut self, rng: &mut SolverRng) -> usize {
        match self {
            RowSampler::Uniform(m) => rng.random_range(0..*m),
            RowSampler::Alias(t) => t.sample(rng),
            RowSampler::Shuffle(s) => s.next(rng),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ShuffledRows {
    order: Vec<usize>,
    pos: usize,
}

impl ShuffledRows {
    pub fn new(rows: Vec<usize>) -> Self {
        assert!(!rows.is_empty(), "a slice needs at least one row");
        ShuffledRows { order: rows, pos: 0 }
    }

    #[inline]
    pub fn next(&mut self, rng: &mut SolverRng) -> usize {
        if self.pos == 0 {
            self.order.shuffle(rng);
        }
        let i = self.order[self.pos];
        self.pos = (self.pos + 1) % self.order.len();
        i
    }
}
