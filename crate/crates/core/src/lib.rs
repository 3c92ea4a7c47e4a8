//! Asynchronous parallel randomized Kaczmarz (AsyRK) for sparse linear
//! systems.
//!
//! The crate contains a serial randomized Kaczmarz baseline, a lock-free
//! multicore executor, a deterministic bounded-delay simulator used to check
//! the convergence theory empirically, the closed-form step-size and rate
//! calculator, and an augmented-system reformulation for least squares.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod datagen;
pub mod delay_sim;
pub mod error;
pub mod exec;
pub mod invariants;
pub mod kaczmarz;
pub mod lsq;
pub mod parallel;
pub mod rng;
pub mod sparsemat;
pub mod stepsize;
pub mod trace;

pub use error::{Error, Result};
pub use exec::Execution;
pub use kaczmarz::{Sampling, SolutionSet, Step, Variant};
pub use sparsemat::{CsrMatrix, SystemStats};
pub use trace::{EpochRecord, Trace};
