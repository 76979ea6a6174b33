//! Driver for discrete-time chains.

use crate::error::{Error, Result};
use crate::models::ChainModel;
use crate::rng::RngStream;
use crate::trajectory::ChainTrajectory;

/// Receives consecutive pairs (σᵢ, σᵢ₊₁) of a chain.
pub trait ChainHook<M: ChainModel> {
    fn transition(&mut self, model: &M, from: &M::State, to: &M::State) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainRunConfig {
    /// Steps discarded before recording.
    pub burn_in: u64,
    /// Recorded steps.
    pub steps: u64,
    pub store_trajectory: bool,
}

#[derive(Debug, Clone)]
pub struct ChainRun<S> {
    pub final_state: S,
    pub recorded_steps: u64,
    pub trajectory: Option<ChainTrajectory<S>>,
    pub failure: Option<Error>,
}

impl<S> ChainRun<S> {
    pub fn is_partial(&self) -> bool {
        self.failure.is_some()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

pub fn run_chain<M: ChainModel>(
    model: &M,
    theta: &[f64],
    initial: M::State,
    config: &ChainRunConfig,
    rng: &mut RngStream,
    hooks: &mut [&mut dyn ChainHook<M>],
) -> Result<ChainRun<M::State>> {
    model.check_params(theta)?;
    if config.steps == 0 {
        return Err(Error::InvalidConfig("recorded step count must be positive".into()));
    }
    let mut state = initial;
    let mut failure = None;
    for _ in 0..config.burn_in {
        match model.sample_next(&state, theta, rng) {
            Ok(next) => state = next,
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let mut stored = config
        .store_trajectory
        .then(|| vec![state.clone()]);
    let mut recorded = 0;
    if failure.is_none() {
        for _ in 0..config.steps {
            let next = match model.sample_next(&state, theta, rng) {
                Ok(n) => n,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            if let Err(e) = hooks
                .iter_mut()
                .try_for_each(|h| h.transition(model, &state, &next))
            {
                failure = Some(if e.is_numerical() { e } else { Error::Hook(e.to_string()) });
                break;
            }
            if let Some(s) = stored.as_mut() {
                s.push(next.clone());
            }
            state = next;
            recorded += 1;
        }
    }
    let trajectory = match stored {
        Some(s) if s.len() >= 2 => Some(ChainTrajectory::new(s)?),
        _ => None,
    };
    Ok(ChainRun {
        final_state: state,
        recorded_steps: recorded,
        trajectory,
        failure,
    })
}

pub fn replay_chain<M: ChainModel>(
    model: &M,
    trajectory: &ChainTrajectory<M::State>,
    hooks: &mut [&mut dyn ChainHook<M>],
) -> Result<()> {
    for (from, to) in trajectory.pairs() {
        for h in hooks.iter_mut() {
            h.transition(model, from, to)?;
        }
    }
    Ok(())
}
