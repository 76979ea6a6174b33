//! Time-periodic chains: p(σ,σ′;m) = p(σ,σ′;kζ+m).

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::exact::finite::{finite_stationary, weighted_row_entropy, weighted_row_fisher, FiniteChain};

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicChain {
    phases: Vec<FiniteChain>,
}

impl PeriodicChain {
    pub fn new(phases: Vec<FiniteChain>) -> Result<Self> {
        let Some(first) = phases.first() else {
            return Err(Error::InvalidConfig("period must be at least 1".into()));
        };
        let n = first.size();
        for p in &phases {
            check_len("phase matrix size", n, p.size())?;
        }
        Ok(Self { phases })
    }

    pub fn period(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[FiniteChain] {
        &self.phases
    }

    /// μ(·,m) for m = 0..ζ: μ(·,0) is stationary for the one-period map
    /// P₀P₁⋯P_{ζ−1}; later phases follow by μ(·,m+1) = μ(·,m)P_m.
    pub fn phase_laws(&self) -> Result<Vec<Vec<f64>>> {
        let first = if self.period() == 1 {
            finite_stationary(&self.phases[0])?
        } else {
            let mut composed = self.phases[0].matrix().clone();
            for p in &self.phases[1..] {
                composed *= p.matrix();
            }
            finite_stationary(&FiniteChain::new(renormalise(composed))?)?
        };
        let mut laws = vec![first];
        for m in 0..self.period() - 1 {
            let row = nalgebra::RowDVector::from_row_slice(&laws[m]) * self.phases[m].matrix();
            laws.push(row.iter().copied().collect());
        }
        Ok(laws)
    }
}

fn renormalise(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in m.row_iter_mut() {
        let s: f64 = row.iter().sum();
        row /= s;
    }
    m
}

/// (1/ζ) Σ_m Σ_σ μ(σ,m) Σ_σ′ p(σ,σ′;m) log(p/p̃).
pub fn periodic_rer(chain: &PeriodicChain, perturbed: &PeriodicChain) -> Result<f64> {
    check_len("period", chain.period(), perturbed.period())?;
    let laws = chain.phase_laws()?;
    let mut total = 0.0;
    for (m, mu) in laws.iter().enumerate() {
        total += weighted_row_entropy(mu, chain.phases[m].matrix(), perturbed.phases[m].matrix())?;
    }
    Ok(total / chain.period() as f64)
}

/// Phase-averaged FIM; `log_grads[m][k]` holds ∂log p(·,·;m)/∂θ_k.
pub fn periodic_fim(chain: &PeriodicChain, log_grads: &[Vec<DMatrix<f64>>]) -> Result<DMatrix<f64>> {
    check_len("phase gradients", chain.period(), log_grads.len())?;
    let laws = chain.phase_laws()?;
    let k = log_grads[0].len();
    let mut total = DMatrix::zeros(k, k);
    for (m, mu) in laws.iter().enumerate() {
        check_len("gradient count", k, log_grads[m].len())?;
        total += weighted_row_fisher(mu, chain.phases[m].matrix(), &log_grads[m])?;
    }
    Ok(total / chain.period() as f64)
}
