//! Estimators for discrete-time chains.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimators::{perturbed_parameters, EstimatorOptions, Estimate, FimEstimate, FimStats, RatioStats};
use crate::models::ChainModel;
use crate::params::Perturbation;
use crate::simulate::ChainHook;
use crate::stats::ConvergenceTrace;

/// Per-step average of the conditional relative entropy
/// ∫ p^θ(σᵢ,σ′) log(p^θ/p^{θ+ε}) dσ′. Needs an enumerable model.
pub struct ChainRerH1 {
    theta: Vec<f64>,
    directions: Vec<Perturbation>,
    perturbed: Vec<Vec<f64>>,
    stats: RatioStats,
    nums: Vec<f64>,
}

impl ChainRerH1 {
    pub fn new<M: ChainModel>(
        model: &M,
        theta: &[f64],
        directions: &[Perturbation],
        options: &EstimatorOptions,
    ) -> Result<Self> {
        let perturbed = perturbed_parameters(theta, directions, |p| model.check_params(p))?;
        Ok(Self {
            theta: theta.to_vec(),
            directions: directions.to_vec(),
            perturbed,
            stats: RatioStats::new(directions.len(), options),
            nums: vec![0.0; directions.len()],
        })
    }

    pub fn directions(&self) -> &[Perturbation] {
        &self.directions
    }

    pub fn estimates(&self) -> Result<Vec<Estimate>> {
        self.stats.estimates()
    }

    pub fn traces(&self) -> Vec<ConvergenceTrace> {
        self.stats.traces()
    }
}

impl<M: ChainModel> ChainHook<M> for ChainRerH1 {
    fn transition(&mut self, model: &M, from: &M::State, _to: &M::State) -> Result<()> {
        for (d, (p, eps)) in self.perturbed.iter().zip(&self.directions).enumerate() {
            self.nums[d] = if eps.is_zero() {
                0.0
            } else {
                model.conditional_relative_entropy(from, &self.theta, p)?
            };
        }
        self.stats.push(&self.nums, 1.0)
    }
}

/// Per-step average of the realized log-density ratio
/// log(p^θ(σᵢ,σᵢ₊₁)/p^{θ+ε}(σᵢ,σᵢ₊₁)).
pub struct ChainRerH2 {
    theta: Vec<f64>,
    directions: Vec<Perturbation>,
    perturbed: Vec<Vec<f64>>,
    stats: RatioStats,
    nums: Vec<f64>,
}

impl ChainRerH2 {
    pub fn new<M: ChainModel>(
        model: &M,
        theta: &[f64],
        directions: &[Perturbation],
        options: &EstimatorOptions,
    ) -> Result<Self> {
        let perturbed = perturbed_parameters(theta, directions, |p| model.check_params(p))?;
        Ok(Self {
            theta: theta.to_vec(),
            directions: directions.to_vec(),
            perturbed,
            stats: RatioStats::new(directions.len(), options),
            nums: vec![0.0; directions.len()],
        })
    }

    pub fn directions(&self) -> &[Perturbation] {
        &self.directions
    }

    pub fn estimates(&self) -> Result<Vec<Estimate>> {
        self.stats.estimates()
    }

    pub fn traces(&self) -> Vec<ConvergenceTrace> {
        self.stats.traces()
    }
}

impl<M: ChainModel> ChainHook<M> for ChainRerH2 {
    fn transition(&mut self, model: &M, from: &M::State, to: &M::State) -> Result<()> {
        let base = model.log_density(from, to, &self.theta)?;
        if !base.is_finite() {
            return Err(Error::Inconsistent(format!(
                "realized transition {from:?} -> {to:?} has density {}",
                base.exp()
            )));
        }
        for (d, (p, eps)) in self.perturbed.iter().zip(&self.directions).enumerate() {
            self.nums[d] = if eps.is_zero() {
                0.0
            } else {
                let lp = model.log_density(from, to, p)?;
                if lp == f64::NEG_INFINITY {
                    return Err(Error::AbsoluteContinuity {
                        transition: format!("{from:?} -> {to:?}"),
                    });
                }
                base - lp
            };
        }
        self.stats.push(&self.nums, 1.0)
    }
}

/// Per-step average of ∫ p^θ ∇log p^θ ∇log p^θᵀ dσ′.
pub struct ChainFimH1 {
    theta: Vec<f64>,
    k: usize,
    packed: Vec<f64>,
    stats: FimStats,
}

impl ChainFimH1 {
    pub fn new<M: ChainModel>(model: &M, theta: &[f64], options: &EstimatorOptions) -> Result<Self> {
        model.check_params(theta)?;
        let k = model.num_params();
        Ok(Self {
            theta: theta.to_vec(),
            k,
            packed: Vec::with_capacity(k * (k + 1) / 2),
            stats: FimStats::new(k, options),
        })
    }

    pub fn estimate(&self) -> Result<FimEstimate> {
        self.stats.estimate()
    }

    pub fn trace(&self) -> Option<ConvergenceTrace> {
        self.stats.trace()
    }
}

fn pack(m: &DMatrix<f64>, out: &mut Vec<f64>) {
    out.clear();
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

impl<M: ChainModel> ChainHook<M> for ChainFimH1 {
    fn transition(&mut self, model: &M, from: &M::State, _to: &M::State) -> Result<()> {
        let f = model.conditional_fisher(from, &self.theta)?;
        if f.nrows() != self.k || f.ncols() != self.k {
            return Err(Error::DimensionMismatch {
                what: "conditional Fisher matrix",
                expected: self.k,
                found: f.nrows(),
            });
        }
        pack(&f, &mut self.packed);
        self.stats.push(&self.packed, 1.0, 1.0)
    }
}

/// Per-step average of ∇log p^θ(σᵢ,σᵢ₊₁) ∇log p^θ(σᵢ,σᵢ₊₁)ᵀ.
pub struct ChainFimH2 {
    theta: Vec<f64>,
    grad: Vec<f64>,
    packed: Vec<f64>,
    stats: FimStats,
}

impl ChainFimH2 {
    pub fn new<M: ChainModel>(model: &M, theta: &[f64], options: &EstimatorOptions) -> Result<Self> {
        model.check_params(theta)?;
        let k = model.num_params();
        Ok(Self {
            theta: theta.to_vec(),
            grad: vec![0.0; k],
            packed: Vec::with_capacity(k * (k + 1) / 2),
            stats: FimStats::new(k, options),
        })
    }

    pub fn estimate(&self) -> Result<FimEstimate> {
        self.stats.estimate()
    }

    pub fn trace(&self) -> Option<ConvergenceTrace> {
        self.stats.trace()
    }
}

impl<M: ChainModel> ChainHook<M> for ChainFimH2 {
    fn transition(&mut self, model: &M, from: &M::State, to: &M::State) -> Result<()> {
        let lp = model.log_density_gradient(from, to, &self.theta, &mut self.grad)?;
        if !lp.is_finite() {
            return Err(Error::Inconsistent(format!("realized transition {from:?} -> {to:?} has zero density")));
        }
        if let Some(i) = self.grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("log-density gradient component {i}"),
            });
        }
        self.stats.push_outer(&self.grad, 1.0, 1.0, &mut self.packed)
    }
}
