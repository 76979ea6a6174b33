//! Trajectory generation in the stationary regime.
//!
//! Drivers stream every post-burn-in transition to a list of hooks
//! (estimators, dumpers). Hooks are passive: they never touch the random
//! stream, so a run with hooks produces the same path as a run without.

use rayon::prelude::*;

use crate::rng::RngStream;

pub mod bbk;
pub mod chain;
pub mod ssa;

pub use bbk::{bbk_step, bbk_step_with_noise, langevin_log_density, uniform_initial_state, BbkNoise};
pub use chain::{replay_chain, run_chain, ChainHook, ChainRun, ChainRunConfig};
pub use ssa::{replay_jumps, run_ssa, ssa_step, CsvDumpHook, JumpHook, JumpRun, SsaConfig};

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    /// Stop once simulated time reaches this value (burn-in included).
    Time(f64),
    /// Stop after this many recorded (post-burn-in) transitions.
    Transitions(u64),
}

/// Runs `f` for replicas `0..count` in parallel, each with its own
/// `(seed, replica)` stream, and returns results in replica order.
pub fn replicas<T, F>(count: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, RngStream) -> T + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|r| f(r, RngStream::new(seed, r as u64)))
        .collect()
}
