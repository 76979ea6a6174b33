//! Model parameter vectors and perturbations.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// A point θ in parameter space with a label per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
    names: Vec<String>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("parameter vector is empty".into()));
        }
        check_len("parameter names", values.len(), names.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "component {} ({}) is not finite",
                i, names[i]
            )));
        }
        Ok(Self { values, names })
    }

    /// Parameters labelled `theta0`, `theta1`, ...
    pub fn unnamed(values: Vec<f64>) -> Result<Self> {
        let names = (0..values.len()).map(|i| format!("theta{i}")).collect();
        Self::new(values, names)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// θ + ε, checked for matching length and finiteness.
    pub fn perturbed(&self, eps: &Perturbation) -> Result<Self> {
        check_len("perturbation", self.len(), eps.len())?;
        let values = self
            .values
            .iter()
            .zip(eps.values())
            .map(|(t, e)| t + e)
            .collect();
        Self::new(values, self.names.clone())
    }

    /// Rejects non-positive components; needed by log-scale transforms.
    pub fn require_positive(&self) -> Result<()> {
        match self.values.iter().position(|&v| v <= 0.0) {
            Some(i) => Err(Error::InvalidParameter(format!(
                "{} = {} must be strictly positive",
                self.names[i], self.values[i]
            ))),
            None => Ok(()),
        }
    }
}

/// A perturbation ε of a parameter vector. The stored vector is the full
/// displacement, i.e. any scalar magnitude is already multiplied in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    values: Vec<f64>,
}

impl Perturbation {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "perturbation has non-finite components".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn zero(k: usize) -> Self {
        Self {
            values: vec![0.0; k],
        }
    }

    /// `magnitude · e_axis` in a k-dimensional parameter space.
    pub fn axis(k: usize, axis: usize, magnitude: f64) -> Result<Self> {
        if axis >= k {
            return Err(Error::DimensionMismatch {
                what: "perturbation axis",
                expected: k,
                found: axis + 1,
            });
        }
        let mut values = vec![0.0; k];
        values[axis] = magnitude;
        Self::new(values)
    }

    /// The 2k directions ±ε₀ e_i, ordered +e₀, −e₀, +e₁, −e₁, ...
    pub fn signed_axes(k: usize, eps0: f64) -> Vec<Self> {
        (0..k)
            .flat_map(|i| [eps0, -eps0].map(|m| Self::axis(k, i, m).expect("axis < k")))
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Short label such as `+0.05*e1` for axis directions, otherwise the vector.
    pub fn label(&self, names: &[String]) -> String {
        let nonzero: Vec<usize> = (0..self.len()).filter(|&i| self.values[i] != 0.0).collect();
        match nonzero.as_slice() {
            [] => "zero".to_string(),
            [i] => {
                let name = names.get(*i).cloned().unwrap_or_else(|| format!("e{i}"));
                format!("{:+}*{}", self.values[*i], name)
            }
            _ => format!("{:?}", self.values),
        }
    }
}
