//! Ergodic-average estimators of the relative entropy rate and the
//! path-space Fisher information matrix.
//!
//! Each estimator is a hook fed by a simulation driver. RER hooks take a
//! batch of perturbations and evaluate all of them along one unperturbed
//! trajectory.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::params::Perturbation;
use crate::stats::{BatchMeans, ConvergenceTrace, FimAccumulator, RerAccumulator};

pub mod chain;
pub mod ctmc;

pub use chain::{ChainFimH1, ChainFimH2, ChainRerH1, ChainRerH2};
pub use ctmc::{CtmcFimH1, CtmcFimH2, CtmcRerH1, CtmcRerH2};

/// H1 averages the conditional expectation over all targets; H2 uses
/// only the realized transitions (Girsanov form, larger variance).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    H1,
    H2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Rer,
    Fim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimatorKind {
    pub form: Form,
    pub quantity: Quantity,
}

impl EstimatorKind {
    pub const RER_H1: Self = Self::new(Form::H1, Quantity::Rer);
    pub const RER_H2: Self = Self::new(Form::H2, Quantity::Rer);
    pub const FIM_H1: Self = Self::new(Form::H1, Quantity::Fim);
    pub const FIM_H2: Self = Self::new(Form::H2, Quantity::Fim);

    pub const fn new(form: Form, quantity: Quantity) -> Self {
        Self { form, quantity }
    }

    /// H1 forms need the full local transition set.
    pub fn needs_enumeration(&self) -> bool {
        self.form == Form::H1
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let q = match self.quantity {
            Quantity::Rer => "rer",
            Quantity::Fim => "fim",
        };
        let h = match self.form {
            Form::H1 => "h1",
            Form::H2 => "h2",
        };
        write!(f, "{q}-{h}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Target number of batches for batch-means standard errors.
    pub batches: usize,
    /// Convergence-trace checkpoints per decade of samples; `None` disables.
    pub trace_per_decade: Option<u32>,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            batches: BatchMeans::DEFAULT_BATCHES,
            trace_per_decade: None,
        }
    }
}

/// A scalar estimate with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    /// `None` until enough batches are complete.
    pub std_error: Option<f64>,
    pub samples: u64,
    /// Accumulated time (jump processes) or step count (chains).
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimEstimate {
    pub matrix: DMatrix<f64>,
    pub std_error: Option<DMatrix<f64>>,
    pub samples: u64,
    pub horizon: f64,
}

impl FimEstimate {
    /// Rescales to another time unit, e.g. per step → per unit time with
    /// `factor = 1/Δt`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * factor,
            std_error: self.std_error.as_ref().map(|m| m * factor.abs()),
            samples: self.samples,
            horizon: self.horizon,
        }
    }
}

impl Estimate {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            estimate: self.estimate * factor,
            std_error: self.std_error.map(|s| s * factor.abs()),
            ..*self
        }
    }
}

/// θ+ε for each direction, rejecting inadmissible ones before any run.
pub fn perturbed_parameters(
    theta: &[f64],
    directions: &[Perturbation],
    check: impl Fn(&[f64]) -> Result<()>,
) -> Result<Vec<Vec<f64>>> {
    check(theta)?;
    directions
        .iter()
        .map(|eps| {
            check_len("perturbation", theta.len(), eps.len())?;
            let p: Vec<f64> = theta.iter().zip(eps.values()).map(|(t, e)| t + e).collect();
            check(&p).map_err(|e| {
                Error::InvalidConfig(format!("direction {:?} leaves the admissible region: {e}", eps.values()))
            })?;
            Ok(p)
        })
        .collect()
}

/// Several ratio estimates Σ numᵢ / Σ wᵢ sharing one weight stream.
#[derive(Debug, Clone)]
pub(crate) struct RatioStats {
    accs: Vec<RerAccumulator>,
    batches: BatchMeans,
    traces: Option<Vec<ConvergenceTrace>>,
    row: Vec<f64>,
    samples: u64,
}

impl RatioStats {
    pub(crate) fn new(width: usize, options: &EstimatorOptions) -> Self {
        Self {
            accs: vec![RerAccumulator::new(); width],
            batches: BatchMeans::new(width + 1, options.batches),
            traces: options
                .trace_per_decade
                .map(|n| vec![ConvergenceTrace::new(n); width]),
            row: vec![0.0; width + 1],
            samples: 0,
        }
    }

    pub(crate) fn push(&mut self, nums: &[f64], weight: f64) -> Result<()> {
        let width = self.accs.len();
        for (acc, &n) in self.accs.iter_mut().zip(nums) {
            acc.add_weighted(n, weight)?;
        }
        self.row[..width].copy_from_slice(nums);
        self.row[width] = weight;
        self.batches.push(&self.row);
        self.samples += 1;
        if let Some(traces) = self.traces.as_mut() {
            if traces.first().is_some_and(|t| t.due(self.samples)) {
                for (t, acc) in traces.iter_mut().zip(&self.accs) {
                    t.record(self.samples, acc.total_weight(), acc.estimate()?);
                }
            }
        }
        Ok(())
    }

    pub(crate) fn estimates(&self) -> Result<Vec<Estimate>> {
        let width = self.accs.len();
        self.accs
            .iter()
            .enumerate()
            .map(|(d, acc)| {
                Ok(Estimate {
                    estimate: acc.estimate()?,
                    std_error: self.batches.ratio_std_error(d, width),
                    samples: self.samples,
                    horizon: acc.total_weight(),
                })
            })
            .collect()
    }

    pub(crate) fn traces(&self) -> Vec<ConvergenceTrace> {
        self.traces.clone().unwrap_or_default()
    }
}

/// Matrix counterpart of [`RatioStats`] over packed upper triangles.
#[derive(Debug, Clone)]
pub(crate) struct FimStats {
    acc: FimAccumulator,
    batches: BatchMeans,
    trace: Option<ConvergenceTrace>,
    row: Vec<f64>,
}

impl FimStats {
    pub(crate) fn new(k: usize, options: &EstimatorOptions) -> Self {
        let width = k * (k + 1) / 2;
        Self {
            acc: FimAccumulator::new(k),
            batches: BatchMeans::new(width + 1, options.batches),
            trace: options.trace_per_decade.map(ConvergenceTrace::new),
            row: vec![0.0; width + 1],
        }
    }

    /// Adds `scale · packed` to the numerator and `weight` to the denominator.
    pub(crate) fn push(&mut self, packed: &[f64], scale: f64, weight: f64) -> Result<()> {
        self.acc.add_packed(packed, scale, weight)?;
        let width = packed.len();
        for (r, v) in self.row.iter_mut().zip(packed) {
            *r = scale * v;
        }
        self.row[width] = weight;
        self.batches.push(&self.row);
        if let Some(trace) = self.trace.as_mut() {
            if trace.due(self.acc.count()) {
                let f = self.acc.estimate()?;
                trace.record(self.acc.count(), self.acc.total_weight(), f.trace());
            }
        }
        Ok(())
    }

    pub(crate) fn push_outer(&mut self, v: &[f64], weight_num: f64, weight: f64, packed: &mut Vec<f64>) -> Result<()> {
        pack_outer(v, packed);
        self.push(packed, weight_num, weight)
    }

    pub(crate) fn estimate(&self) -> Result<FimEstimate> {
        let k = self.acc.dim();
        let matrix = self.acc.estimate()?;
        let width = k * (k + 1) / 2;
        let mut se = DMatrix::zeros(k, k);
        let mut complete = true;
        for i in 0..k {
            for j in i..k {
                let idx = packed_index(k, i, j);
                match self.batches.ratio_std_error(idx, width) {
                    Some(v) => {
                        se[(i, j)] = v;
                        se[(j, i)] = v;
                    }
                    None => complete = false,
                }
            }
        }
        Ok(FimEstimate {
            matrix,
            std_error: complete.then_some(se),
            samples: self.acc.count(),
            horizon: self.acc.total_weight(),
        })
    }

    /// Running trace of the FIM (sum of diagonal entries).
    pub(crate) fn trace(&self) -> Option<ConvergenceTrace> {
        self.trace.clone()
    }
}

pub(crate) fn packed_index(k: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < k);
    i * k - i * (i + 1) / 2 + j
}

pub(crate) fn pack_outer(v: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for i in 0..v.len() {
        for j in i..v.len() {
            out.push(v[i] * v[j]);
        }
    }
}

/// ½ εᵀ F ε.
pub fn rer_quadratic(eps: &Perturbation, fim: &DMatrix<f64>) -> Result<f64> {
    let k = eps.len();
    check_len("FIM rows", k, fim.nrows())?;
    check_len("FIM columns", k, fim.ncols())?;
    let e = eps.values();
    let mut q = 0.0;
    for i in 0..k {
        for j in 0..k {
            q += e[i] * fim[(i, j)] * e[j];
        }
    }
    Ok(0.5 * q)
}

/// FIM with respect to log θ: (F_log)ᵢⱼ = θᵢ θⱼ Fᵢⱼ.
pub fn log_scale_fim(fim: &DMatrix<f64>, theta: &[f64]) -> Result<DMatrix<f64>> {
    let k = theta.len();
    check_len("FIM rows", k, fim.nrows())?;
    check_len("FIM columns", k, fim.ncols())?;
    if let Some(t) = theta.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "log-scale sensitivity needs positive parameters, got {t}"
        )));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| theta[i] * theta[j] * fim[(i, j)]))
}

/// Maps a log-scale perturbation ε to the original scale, θ.ε.
pub fn log_scale_perturbation(eps: &Perturbation, theta: &[f64]) -> Result<Perturbation> {
    check_len("perturbation", theta.len(), eps.len())?;
    Perturbation::new(eps.values().iter().zip(theta).map(|(e, t)| e * t).collect())
}
