//! Serializable result records.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analysis::EigenReport;
use crate::estimators::{Estimate, FimEstimate};
use crate::params::Perturbation;
use crate::stats::TracePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub label: String,
    pub direction: Vec<f64>,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub samples: u64,
    pub horizon: f64,
    /// Oracle value where one exists.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact: Option<f64>,
    /// ½ εᵀFε with the estimated FIM.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub quadratic: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<TracePoint>,
}

impl DirectionReport {
    pub fn new(eps: &Perturbation, names: &[String], est: &Estimate) -> Self {
        Self {
            label: eps.label(names),
            direction: eps.values().to_vec(),
            estimate: est.estimate,
            std_error: est.std_error,
            samples: est.samples,
            horizon: est.horizon,
            exact: None,
            quadratic: None,
            trace: Vec::new(),
        }
    }
}

/// Dense row-major FIM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FimReport {
    pub k: usize,
    pub names: Vec<String>,
    pub matrix: Vec<f64>,
    pub std_error: Option<Vec<f64>>,
    pub samples: u64,
    pub horizon: f64,
}

pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

pub fn from_row_major(k: usize, values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(k, k, values)
}

impl FimReport {
    pub fn new(names: &[String], est: &FimEstimate) -> Self {
        Self {
            k: est.matrix.nrows(),
            names: names.to_vec(),
            matrix: row_major(&est.matrix),
            std_error: est.std_error.as_ref().map(row_major),
            samples: est.samples,
            horizon: est.horizon,
        }
    }

    pub fn from_matrix(names: &[String], m: &DMatrix<f64>) -> Self {
        Self {
            k: m.nrows(),
            names: names.to_vec(),
            matrix: row_major(m),
            std_error: None,
            samples: 0,
            horizon: 0.0,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        from_row_major(self.k, &self.matrix)
    }
}

/// det F under both names it goes by.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimality {
    pub a_optimality: f64,
    pub d_optimality: f64,
}

impl Optimality {
    pub fn new(determinant: f64) -> Self {
        Self {
            a_optimality: determinant,
            d_optimality: determinant,
        }
    }
}

/// What one replica simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub replica: usize,
    pub seed: u64,
    pub stream: u64,
    /// Recorded transitions or steps.
    pub recorded: u64,
    /// Recorded time (jump processes) or steps (chains).
    pub horizon: f64,
    pub final_state: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport<C> {
    pub model: String,
    /// The fully resolved configuration, seed included.
    pub config: C,
    pub estimator: String,
    pub directions: Vec<DirectionReport>,
    pub fim: Option<FimReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fim_log_scale: Option<FimReport>,
    pub eigen: Option<EigenReport>,
    pub optimality: Option<Optimality>,
    pub runs: Vec<RunSummary>,
    /// Set when a run stopped early; the estimates cover what was recorded.
    pub partial: bool,
    pub errors: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(row_major(&m), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(from_row_major(2, &row_major(&m)), m);
    }
}
