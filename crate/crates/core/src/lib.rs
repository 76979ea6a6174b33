//! Parameter sensitivity of stationary Markov dynamics through the
//! path-space relative entropy rate (RER) and Fisher information matrix
//! (FIM).
//!
//! The RER between the stationary path laws of a process under θ and
//! under θ+ε is estimated as an ergodic average along a single simulated
//! trajectory of the unperturbed process, for any number of directions ε
//! at once. The FIM is its Hessian at ε = 0, so 𝓗(ε) ≈ ½ εᵀFε and the
//! leading eigenvector of F is the most sensitive parameter direction.
//!
//! - [`models`]: rate catalogs ([`models::JumpModel`]) and transition
//!   densities ([`models::ChainModel`]), with the Schlögl, ZGB and Morse
//!   Langevin models built in.
//! - [`simulate`]: SSA and chain drivers that stream transitions to hooks.
//! - [`estimators`]: the H1 (conditional expectation) and H2 (Girsanov)
//!   estimators of RER and FIM.
//! - [`exact`]: oracles for finite and birth–death chains, periodic and
//!   semi-Markov processes.
//! - [`analysis`]: eigen-analysis, determinants, phase diagrams.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod models;
pub mod params;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use params::{ParameterVector, Perturbation};
pub use rng::RngStream;
