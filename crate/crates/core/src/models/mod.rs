//! Model abstractions and the built-in models.
//!
//! A [`JumpModel`] describes a continuous-time Markov chain through its
//! rate catalog c^θ(σ,σ′). Events are organised in groups (lattice sites,
//! or a single group for well-mixed systems) so that local changes can be
//! tracked incrementally. Distinct events of a state must lead to distinct
//! target states, or else share the same parameter dependence, so that
//! sums over events equal sums over target states.
//!
//! A [`ChainModel`] describes a discrete-time chain through its transition
//! density p^θ(σ,σ′).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::trajectory::EventId;

pub mod langevin;
pub mod schlogl;
pub mod zgb;

pub use langevin::{LangevinModel, LangevinSettings, LangevinState};
pub use schlogl::Schlogl;
pub use zgb::{Zgb, ZgbLattice};

pub trait JumpModel: Sync {
    type State: Clone + Send + Sync + std::fmt::Debug;

    fn num_params(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    /// Rejects parameter vectors outside the admissible region.
    fn check_params(&self, theta: &[f64]) -> Result<()>;

    fn num_groups(&self, state: &Self::State) -> usize;

    fn events_per_group(&self) -> usize;

    /// Writes the `events_per_group()` rates of `group` into `rates`.
    fn group_rates(&self, state: &Self::State, group: usize, theta: &[f64], rates: &mut [f64]);

    /// ∇_θ log c^θ for an event with positive rate.
    fn log_rate_gradient(
        &self,
        state: &Self::State,
        id: EventId,
        theta: &[f64],
        grad: &mut [f64],
    ) -> Result<()>;

    /// Applies the event and lists, sorted and deduplicated, the groups
    /// whose rates may have changed.
    fn execute(
        &self,
        state: &mut Self::State,
        id: EventId,
        rng: &mut RngStream,
        touched: &mut Vec<usize>,
    ) -> Result<()>;

    fn describe_event(&self, state: &Self::State, id: EventId) -> String {
        format!("{} via group {} event {}", self.state_digest(state), id.group, id.event)
    }

    fn state_digest(&self, state: &Self::State) -> String;
}

/// All positive-rate events of `state` under `theta`.
pub fn positive_events<M: JumpModel>(model: &M, state: &M::State, theta: &[f64]) -> Vec<(EventId, f64)> {
    let per = model.events_per_group();
    let mut rates = vec![0.0; per];
    let mut out = Vec::new();
    for group in 0..model.num_groups(state) {
        model.group_rates(state, group, theta, &mut rates);
        for (event, &c) in rates.iter().enumerate() {
            if c > 0.0 {
                out.push((EventId { group, event }, c));
            }
        }
    }
    out
}

/// λ^θ(σ).
pub fn total_rate<M: JumpModel>(model: &M, state: &M::State, theta: &[f64]) -> f64 {
    let per = model.events_per_group();
    let mut rates = vec![0.0; per];
    let mut total = 0.0;
    for group in 0..model.num_groups(state) {
        model.group_rates(state, group, theta, &mut rates);
        total += rates.iter().sum::<f64>();
    }
    total
}

/// Rate of one event.
pub fn event_rate<M: JumpModel>(model: &M, state: &M::State, id: EventId, theta: &[f64]) -> f64 {
    let mut rates = vec![0.0; model.events_per_group()];
    model.group_rates(state, id.group, theta, &mut rates);
    rates[id.event]
}

pub trait ChainModel: Sync {
    type State: Clone + Send + Sync + std::fmt::Debug;

    fn num_params(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    fn check_params(&self, theta: &[f64]) -> Result<()>;

    /// log p^θ(σ,σ′); `-inf` where the density vanishes.
    fn log_density(&self, from: &Self::State, to: &Self::State, theta: &[f64]) -> Result<f64>;

    /// Returns log p^θ(σ,σ′) and writes ∇_θ log p^θ(σ,σ′) into `grad`.
    fn log_density_gradient(
        &self,
        from: &Self::State,
        to: &Self::State,
        theta: &[f64],
        grad: &mut [f64],
    ) -> Result<f64>;

    fn sample_next(&self, from: &Self::State, theta: &[f64], rng: &mut RngStream) -> Result<Self::State>;

    /// ∫ p^θ(σ,σ′) log(p^θ/p^{θ+ε})(σ,σ′) dσ′, when the model can evaluate it.
    fn conditional_relative_entropy(
        &self,
        _from: &Self::State,
        _theta: &[f64],
        _perturbed: &[f64],
    ) -> Result<f64> {
        Err(Error::NotEnumerable)
    }

    /// ∫ p^θ ∇_θ log p^θ ∇_θ log p^θᵀ dσ′, when the model can evaluate it.
    fn conditional_fisher(&self, _from: &Self::State, _theta: &[f64]) -> Result<DMatrix<f64>> {
        Err(Error::NotEnumerable)
    }
}
