//! Stored trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies one event of a jump model: an event group (a lattice site,
/// or `0` for well-mixed models) and the event index within that group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventId {
    pub group: usize,
    pub event: usize,
}

/// Embedded chain of a jump process with its holding times.
///
/// `states[i]` is held for `waits[i]` and then left through `events[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpTrajectory<S> {
    states: Vec<S>,
    waits: Vec<f64>,
    events: Vec<EventId>,
    /// Groups whose rates changed after each jump.
    touched: Vec<Vec<usize>>,
    final_state: Option<S>,
    total_time: f64,
}

impl<S> Default for JumpTrajectory<S> {
    fn default() -> Self {
        Self {
            states: Vec::new(),
            waits: Vec::new(),
            events: Vec::new(),
            touched: Vec::new(),
            final_state: None,
            total_time: 0.0,
        }
    }
}

impl<S: Clone> JumpTrajectory<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: S, wait: f64, event: EventId, touched: Vec<usize>) -> Result<()> {
        if !(wait > 0.0) || !wait.is_finite() {
            return Err(Error::Inconsistent(format!(
                "waiting time must be positive, got {wait}"
            )));
        }
        self.states.push(state);
        self.waits.push(wait);
        self.events.push(event);
        self.touched.push(touched);
        self.total_time += wait;
        Ok(())
    }

    pub fn set_final_state(&mut self, state: S) {
        self.final_state = Some(state);
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn waits(&self) -> &[f64] {
        &self.waits
    }

    pub fn events(&self) -> &[EventId] {
        &self.events
    }

    pub fn touched(&self) -> &[Vec<usize>] {
        &self.touched
    }

    /// State after the last recorded jump.
    pub fn final_state(&self) -> Option<&S> {
        self.final_state.as_ref()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// T = Σ Δτᵢ.
    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    /// State entered by jump `i`.
    pub fn next_state(&self, i: usize) -> Option<&S> {
        if i + 1 < self.states.len() {
            Some(&self.states[i + 1])
        } else if i + 1 == self.states.len() {
            self.final_state.as_ref()
        } else {
            None
        }
    }
}

/// Path σ₀ … σ_M of a discrete-time chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrajectory<S> {
    states: Vec<S>,
}

impl<S> ChainTrajectory<S> {
    pub fn new(states: Vec<S>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidParameter(
                "a chain trajectory needs at least two states".into(),
            ));
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    /// Number of transitions M.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&S, &S)> {
        self.states.windows(2).map(|w| (&w[0], &w[1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jump_trajectory_total_time() {
        let mut t = JumpTrajectory::new();
        let ev = EventId { group: 0, event: 0 };
        t.push(0u32, 0.5, ev, vec![0]).unwrap();
        t.push(1u32, 1.5, ev, vec![0]).unwrap();
        t.set_final_state(2);
        assert_eq!(t.total_time(), 2.0);
        assert_eq!(t.next_state(0), Some(&1));
        assert_eq!(t.next_state(1), Some(&2));
        assert!(t.push(3, 0.0, ev, vec![]).is_err());
    }

    #[test]
    fn chain_trajectory_needs_two_states() {
        assert!(ChainTrajectory::new(vec![1]).is_err());
        let c = ChainTrajectory::new(vec![1, 2, 3]).unwrap();
        assert_eq!(c.steps(), 2);
        assert_eq!(c.pairs().count(), 2);
    }
}
