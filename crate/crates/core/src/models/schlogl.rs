//! Schlögl reaction network.
//!
//! | event | reaction     | rate                      |
//! |-------|--------------|---------------------------|
//! | 1     | A + 2X → 3X  | k₁A·x(x−1)/(2Ω)           |
//! | 2     | 3X → A + 2X  | k₂·x(x−1)(x−2)/(6Ω²)      |
//! | 3     | B → X        | k₃B·Ω                     |
//! | 4     | X → B        | k₄·x                      |
//!
//! As a jump process the state is the count x and the transitions are
//! x → x+1 (birth, rate c₁+c₃) and x → x−1 (death, rate c₂+c₄).

use crate::error::{Error, Result};
use crate::models::JumpModel;
use crate::rng::RngStream;
use crate::trajectory::EventId;

pub const BIRTH: usize = 0;
pub const DEATH: usize = 1;

/// θ = [k₁A, k₂, k₃B, k₄]; the volume Ω is a fixed setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schlogl {
    pub volume: f64,
}

impl Default for Schlogl {
    fn default() -> Self {
        Self { volume: 15.0 }
    }
}

impl Schlogl {
    pub const NUM_PARAMS: usize = 4;
    pub const DEFAULT_THETA: [f64; 4] = [3.0, 1.0, 2.0, 3.5];
    pub const PARAM_NAMES: [&'static str; 4] = ["k1A", "k2", "k3B", "k4"];

    pub fn new(volume: f64) -> Result<Self> {
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "volume must be positive, got {volume}"
            )));
        }
        Ok(Self { volume })
    }

    /// Per-reaction rates (c₁, c₂, c₃, c₄).
    pub fn reaction_rates(&self, x: u64, theta: &[f64]) -> [f64; 4] {
        let om = self.volume;
        let xf = x as f64;
        let pair = xf * (xf - 1.0);
        let triple = if x >= 2 { pair * (xf - 2.0) } else { 0.0 };
        [
            theta[0] * pair / (2.0 * om),
            theta[1] * triple / (6.0 * om * om),
            theta[2] * om,
            theta[3] * xf,
        ]
    }

    /// ∇_θ log c_k for reaction `k` (0-based). Each rate is linear in one
    /// parameter, so the gradient is e_k/θ_k.
    pub fn reaction_log_gradient(&self, x: u64, theta: &[f64], k: usize) -> Result<[f64; 4]> {
        if k >= 4 {
            return Err(Error::InvalidParameter(format!("reaction index {k} out of range")));
        }
        if self.reaction_rates(x, theta)[k] <= 0.0 {
            return Err(Error::UndefinedGradient(format!(
                "reaction {} has zero rate at x={x}",
                k + 1
            )));
        }
        let mut g = [0.0; 4];
        g[k] = 1.0 / theta[k];
        Ok(g)
    }

    /// c(x, x+1) = c₁ + c₃.
    pub fn birth_rate(&self, x: u64, theta: &[f64]) -> f64 {
        let c = self.reaction_rates(x, theta);
        c[0] + c[2]
    }

    /// c(x, x−1) = c₂ + c₄.
    pub fn death_rate(&self, x: u64, theta: &[f64]) -> f64 {
        let c = self.reaction_rates(x, theta);
        c[1] + c[3]
    }
}

impl JumpModel for Schlogl {
    type State = u64;

    fn num_params(&self) -> usize {
        Self::NUM_PARAMS
    }

    fn param_names(&self) -> Vec<String> {
        Self::PARAM_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn check_params(&self, theta: &[f64]) -> Result<()> {
        crate::error::check_len("Schlögl parameters", 4, theta.len())?;
        for (name, &v) in Self::PARAM_NAMES.iter().zip(theta) {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} must be strictly positive"
                )));
            }
        }
        Ok(())
    }

    fn num_groups(&self, _state: &u64) -> usize {
        1
    }

    fn events_per_group(&self) -> usize {
        2
    }

    fn group_rates(&self, state: &u64, _group: usize, theta: &[f64], rates: &mut [f64]) {
        let c = self.reaction_rates(*state, theta);
        rates[BIRTH] = c[0] + c[2];
        rates[DEATH] = c[1] + c[3];
    }

    fn log_rate_gradient(&self, state: &u64, id: EventId, theta: &[f64], grad: &mut [f64]) -> Result<()> {
        let c = self.reaction_rates(*state, theta);
        grad.iter_mut().for_each(|g| *g = 0.0);
        // ∇ log(cᵢ + cⱼ) = (cᵢ eᵢ/θᵢ + cⱼ eⱼ/θⱼ) / (cᵢ + cⱼ)
        let (i, j) = match id.event {
            BIRTH => (0, 2),
            DEATH => (1, 3),
            e => return Err(Error::InvalidParameter(format!("event index {e} out of range"))),
        };
        let total = c[i] + c[j];
        if total <= 0.0 {
            return Err(Error::UndefinedGradient(format!(
                "{} rate is zero at x={}",
                if id.event == BIRTH { "birth" } else { "death" },
                state
            )));
        }
        grad[i] = c[i] / (theta[i] * total);
        grad[j] = c[j] / (theta[j] * total);
        Ok(())
    }

    fn execute(&self, state: &mut u64, id: EventId, _rng: &mut RngStream, touched: &mut Vec<usize>) -> Result<()> {
        match id.event {
            BIRTH => *state += 1,
            DEATH => {
                if *state == 0 {
                    return Err(Error::Inconsistent("death event at x = 0".into()));
                }
                *state -= 1
            }
            e => return Err(Error::InvalidParameter(format!("event index {e} out of range"))),
        }
        touched.clear();
        touched.push(0);
        Ok(())
    }

    fn describe_event(&self, state: &u64, id: EventId) -> String {
        let target = if id.event == BIRTH {
            state + 1
        } else {
            state.saturating_sub(1)
        };
        format!("x={state} -> x={target}")
    }

    fn state_digest(&self, state: &u64) -> String {
        state.to_string()
    }
}
