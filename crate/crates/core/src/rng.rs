//! Seeding conventions.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value. Worker `k` of a run with base seed `s` uses `s ^ k`, and
//! Monte Carlo replicate `r` uses `s ^ r`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SolverRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SolverRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
pub fn subseed(base: u64, index: usize) -> u64 {
    base ^ index as u64
}
