//! Exact small-system oracles.

pub mod ctmc;
pub mod finite;
pub mod periodic;
pub mod semi_markov;

pub use ctmc::{
    birth_death_stationary, birth_death_stationary_auto, exact_fim_ctmc, exact_rer_ctmc, interior_modes,
    schlogl_law,
};
pub use finite::{
    brute_force_path_re, ctmc_stationary, exact_fim_chain, exact_rer_chain, finite_stationary, parse_matrix,
    stationary_power_iteration, stationary_relative_entropy, FiniteChain, FiniteCtmc, SoftmaxChain,
};
pub use periodic::{periodic_fim, periodic_rer, PeriodicChain};
pub use semi_markov::{
    mean_sojourn, semi_markov_fim, semi_markov_rer, ExponentialKernel, SemiMarkovKernel, SharedWaitingKernel,
    TimeGrid,
};
