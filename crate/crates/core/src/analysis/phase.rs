//! Most/least sensitive directions over a parameter grid.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::eigen_sym;
use crate::error::Result;
use crate::estimators::{CtmcFimH1, EstimatorOptions};
use crate::models::JumpModel;
use crate::rng::RngStream;
use crate::simulate::{run_ssa, SsaConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub params: Vec<f64>,
    pub max_direction: Vec<f64>,
    pub max_value: f64,
    pub min_direction: Vec<f64>,
    pub min_value: f64,
    pub valid: bool,
    /// Why the point is invalid.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub names: Vec<String>,
    pub points: Vec<PhasePoint>,
}

impl PhaseDiagram {
    /// Largest eigenvalue over the valid points; arrows are drawn with
    /// length eigenvalue / this value.
    pub fn arrow_scale(&self) -> f64 {
        self.points
            .iter()
            .filter(|p| p.valid)
            .map(|p| p.max_value)
            .fold(0.0, f64::max)
    }

    /// `p1,p2,evec_max_x,evec_max_y,eval_max,evec_min_x,evec_min_y,eval_min,valid`;
    /// missing components are written as 0.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "p1,p2,evec_max_x,evec_max_y,eval_max,evec_min_x,evec_min_y,eval_min,valid")?;
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                get(&p.params, 0),
                get(&p.params, 1),
                get(&p.max_direction, 0),
                get(&p.max_direction, 1),
                p.max_value,
                get(&p.min_direction, 0),
                get(&p.min_direction, 1),
                p.min_value,
                p.valid
            )?;
        }
        Ok(())
    }
}

/// Runs the SSA with an H1 FIM estimator at every grid point (in parallel,
/// stream id = point index) and records the extreme eigen-directions.
/// Failed points are kept and marked invalid.
pub fn phase_diagram<M, I>(
    model: &M,
    grid: &[Vec<f64>],
    initial: I,
    config: &SsaConfig,
    seed: u64,
    options: &EstimatorOptions,
) -> PhaseDiagram
where
    M: JumpModel,
    I: Fn(&[f64]) -> M::State + Sync,
{
    let points = grid
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let mut rng = RngStream::new(seed, i as u64);
            match point(model, theta, initial(theta), config, &mut rng, options) {
                Ok(p) => p,
                Err(e) => PhasePoint {
                    params: theta.clone(),
                    max_direction: vec![],
                    max_value: f64::NAN,
                    min_direction: vec![],
                    min_value: f64::NAN,
                    valid: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    PhaseDiagram {
        names: model.param_names(),
        points,
    }
}

fn point<M: JumpModel>(
    model: &M,
    theta: &[f64],
    initial: M::State,
    config: &SsaConfig,
    rng: &mut RngStream,
    options: &EstimatorOptions,
) -> Result<PhasePoint> {
    let mut fim = CtmcFimH1::new(model, theta, options)?;
    run_ssa(model, theta, initial, config, rng, &mut [&mut fim])?.into_result()?;
    let e = eigen_sym(&fim.estimate()?.matrix)?;
    let (max_direction, max_value) = e.most_sensitive();
    let (min_direction, min_value) = e.least_sensitive();
    Ok(PhasePoint {
        params: theta.to_vec(),
        max_direction: max_direction.to_vec(),
        max_value,
        min_direction: min_direction.to_vec(),
        min_value,
        valid: true,
        error: None,
    })
}
