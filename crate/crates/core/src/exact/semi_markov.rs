//! Semi-Markov processes given by a kernel density q(σ,σ′;t): the
//! probability density of jumping to σ′ after a sojourn of length t in σ.
//! Its time integral is the embedded transition matrix p(σ,σ′).

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::exact::finite::{finite_stationary, FiniteChain};
use crate::stats::KahanSum;

/// Bound on the kernel mass beyond the last grid node.
pub const TAIL_BOUND: f64 = 1e-8;

pub trait SemiMarkovKernel: Sync {
    fn size(&self) -> usize;

    fn embedded(&self) -> &FiniteChain;

    fn density(&self, from: usize, to: usize, t: f64) -> f64;

    fn num_params(&self) -> usize {
        0
    }

    /// ∇_θ log q(σ,σ′;t).
    fn log_density_gradient(&self, _from: usize, _to: usize, _t: f64, _grad: &mut [f64]) -> Result<()> {
        Err(Error::NotEnumerable)
    }
}

/// Quadrature nodes, increasing and starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 || nodes[0] != 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig(
                "time grid needs at least 3 strictly increasing nodes starting at 0".into(),
            ));
        }
        Ok(Self { nodes })
    }

    /// 0 followed by `n` geometrically spaced nodes from `lo` to `hi`.
    pub fn geometric(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || n < 2 {
            return Err(Error::InvalidConfig(format!("bad geometric grid ({lo}, {hi}, {n})")));
        }
        let r = (hi / lo).powf(1.0 / (n - 1) as f64);
        let mut nodes = vec![0.0];
        nodes.extend((0..n).map(|i| lo * r.powi(i as i32)));
        *nodes.last_mut().unwrap() = hi;
        Self::new(nodes)
    }

    /// 2000 geometric nodes from 10⁻⁴ to 50 mean sojourns.
    pub fn default_for(mean_sojourn: f64) -> Result<Self> {
        Self::geometric(1e-4 * mean_sojourn, 50.0 * mean_sojourn, 2000)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut s = KahanSum::new();
        let mut prev = (self.nodes[0], f(self.nodes[0]));
        for &t in &self.nodes[1..] {
            let v = f(t);
            s.add(0.5 * (t - prev.0) * (v + prev.1));
            prev = (t, v);
        }
        s.value()
    }
}

/// Mass beyond the last node, extrapolating the final decay as exponential.
fn tail_mass(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> f64 {
    let n = grid.nodes.len();
    let (t0, t1) = (grid.nodes[n - 2], grid.nodes[n - 1]);
    let (f0, f1) = (f(t0), f(t1));
    if f1 <= 0.0 {
        return 0.0;
    }
    if !(f0 > f1) {
        return f64::INFINITY;
    }
    f1 * (t1 - t0) / (f0 / f1).ln()
}

struct Prepared {
    mu: Vec<f64>,
    mean_sojourn: f64,
}

fn prepare<K: SemiMarkovKernel + ?Sized>(kernel: &K, grid: &TimeGrid) -> Result<Prepared> {
    let n = kernel.size();
    let p = kernel.embedded().matrix();
    let mu = finite_stationary(kernel.embedded())?;
    let mut missing = 0.0;
    let mut mean = KahanSum::new();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] == 0.0 {
                continue;
            }
            missing += mu[i] * tail_mass(grid, |t| kernel.density(i, j, t));
            mean.add(mu[i] * grid.integrate(|t| t * kernel.density(i, j, t)));
        }
    }
    if !(missing < TAIL_BOUND) {
        return Err(Error::QuadratureTail {
            missing,
            bound: TAIL_BOUND,
        });
    }
    let mean_sojourn = mean.value();
    if !(mean_sojourn > 0.0 && mean_sojourn.is_finite()) {
        return Err(Error::InvalidConfig(format!("mean sojourn {mean_sojourn} must be positive")));
    }
    Ok(Prepared { mu, mean_sojourn })
}

/// Mean sojourn m̂ = Σ μ(σ) Σ_σ′ ∫ t q(σ,σ′;t) dt on `grid`.
pub fn mean_sojourn<K: SemiMarkovKernel + ?Sized>(kernel: &K, grid: &TimeGrid) -> Result<f64> {
    Ok(prepare(kernel, grid)?.mean_sojourn)
}

/// (1/m̂) ∫ Σ μ(σ) q log(q/q̃) ds by trapezoidal quadrature.
pub fn semi_markov_rer<K: SemiMarkovKernel + ?Sized, L: SemiMarkovKernel + ?Sized>(
    kernel: &K,
    perturbed: &L,
    grid: &TimeGrid,
) -> Result<f64> {
    let n = kernel.size();
    check_len("perturbed kernel size", n, perturbed.size())?;
    let prep = prepare(kernel, grid)?;
    let p = kernel.embedded().matrix();
    let mut total = KahanSum::new();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] == 0.0 || prep.mu[i] == 0.0 {
                continue;
            }
            let mut violated = false;
            let integral = grid.integrate(|t| {
                let a = kernel.density(i, j, t);
                if a > 0.0 {
                    let b = perturbed.density(i, j, t);
                    if !(b > 0.0) {
                        violated = true;
                        return 0.0;
                    }
                    a * (a / b).ln()
                } else {
                    0.0
                }
            });
            if violated {
                return Err(Error::AbsoluteContinuity {
                    transition: format!("{i} -> {j}"),
                });
            }
            total.add(prep.mu[i] * integral);
        }
    }
    Ok(total.value() / prep.mean_sojourn)
}

/// (1/m̂) ∫ Σ μ(σ) q ∇log q ∇log qᵀ ds.
pub fn semi_markov_fim<K: SemiMarkovKernel + ?Sized>(kernel: &K, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    let n = kernel.size();
    let k = kernel.num_params();
    let prep = prepare(kernel, grid)?;
    let p = kernel.embedded().matrix();
    let mut out = DMatrix::zeros(k, k);
    let mut grad = vec![0.0; k];
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] == 0.0 || prep.mu[i] == 0.0 {
                continue;
            }
            // evaluate gradients once per node
            let mut samples = Vec::with_capacity(grid.nodes.len());
            for &t in &grid.nodes {
                let q = kernel.density(i, j, t);
                kernel.log_density_gradient(i, j, t, &mut grad)?;
                samples.push((q, grad.clone()));
            }
            for a in 0..k {
                for b in a..k {
                    let mut s = KahanSum::new();
                    for w in 1..grid.nodes.len() {
                        let dt = grid.nodes[w] - grid.nodes[w - 1];
                        let f = |(q, g): &(f64, Vec<f64>)| q * g[a] * g[b];
                        s.add(0.5 * dt * (f(&samples[w]) + f(&samples[w - 1])));
                    }
                    let v = prep.mu[i] * s.value() / prep.mean_sojourn;
                    out[(a, b)] += v;
                    if a != b {
                        out[(b, a)] += v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exponential sojourns: q(σ,σ′;t) = p(σ,σ′) λ_σ e^{−λ_σ t}, with the
/// rates λ as parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialKernel {
    embedded: FiniteChain,
    rates: Vec<f64>,
}

impl ExponentialKernel {
    pub fn new(embedded: FiniteChain, rates: Vec<f64>) -> Result<Self> {
        check_len("sojourn rates", embedded.size(), rates.len())?;
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0)) {
            return Err(Error::InvalidParameter(format!("sojourn rate {r} must be positive")));
        }
        Ok(Self { embedded, rates })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

impl SemiMarkovKernel for ExponentialKernel {
    fn size(&self) -> usize {
        self.embedded.size()
    }

    fn embedded(&self) -> &FiniteChain {
        &self.embedded
    }

    fn density(&self, from: usize, to: usize, t: f64) -> f64 {
        let l = self.rates[from];
        self.embedded.matrix()[(from, to)] * l * (-l * t).exp()
    }

    fn num_params(&self) -> usize {
        self.rates.len()
    }

    fn log_density_gradient(&self, from: usize, _to: usize, t: f64, grad: &mut [f64]) -> Result<()> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        grad[from] = 1.0 / self.rates[from] - t;
        Ok(())
    }
}

/// Kernel with one waiting-time density f shared by all transitions:
/// q(σ,σ′;t) = p(σ,σ′) f(t).
pub struct SharedWaitingKernel<F: Fn(f64) -> f64 + Sync> {
    embedded: FiniteChain,
    waiting: F,
}

impl<F: Fn(f64) -> f64 + Sync> SharedWaitingKernel<F> {
    pub fn new(embedded: FiniteChain, waiting: F) -> Self {
        Self { embedded, waiting }
    }
}

impl<F: Fn(f64) -> f64 + Sync> SemiMarkovKernel for SharedWaitingKernel<F> {
    fn size(&self) -> usize {
        self.embedded.size()
    }

    fn embedded(&self) -> &FiniteChain {
        &self.embedded
    }

    fn density(&self, from: usize, to: usize, t: f64) -> f64 {
        self.embedded.matrix()[(from, to)] * (self.waiting)(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::finite::exact_rer_chain;

    fn embedded(a: f64, b: f64) -> FiniteChain {
        FiniteChain::from_rows(&[&[1.0 - a, a], &[b, 1.0 - b]]).unwrap()
    }

    #[test]
    fn identical_kernels_give_zero() {
        let k = ExponentialKernel::new(embedded(0.4, 0.7), vec![1.0, 2.0]).unwrap();
        let grid = TimeGrid::default_for(1.0).unwrap();
        assert_eq!(semi_markov_rer(&k, &k, &grid).unwrap(), 0.0);
    }

    #[test]
    fn shared_waiting_factorises() {
        let f = |t: f64| 2.0 * (-2.0 * t).exp();
        let (p, q) = (embedded(0.4, 0.7), embedded(0.5, 0.6));
        let a = SharedWaitingKernel::new(p.clone(), f);
        let b = SharedWaitingKernel::new(q.clone(), f);
        let grid = TimeGrid::geometric(1e-5, 30.0, 20000).unwrap();
        let m = mean_sojourn(&a, &grid).unwrap();
        assert!((m - 0.5).abs() < 1e-6);
        let mu = finite_stationary(&p).unwrap();
        let expected = exact_rer_chain(&p, &q, &mu).unwrap() / m;
        let got = semi_markov_rer(&a, &b, &grid).unwrap();
        assert!((got - expected).abs() < 1e-6 * expected, "{got} vs {expected}");
    }

    #[test]
    fn short_grid_is_rejected() {
        let k = ExponentialKernel::new(embedded(0.4, 0.7), vec![1.0, 2.0]).unwrap();
        let grid = TimeGrid::geometric(1e-4, 5.0, 200).unwrap();
        assert!(matches!(semi_markov_rer(&k, &k, &grid), Err(Error::QuadratureTail { .. })));
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 1.0, 2.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 2.0, 1.0]).is_err());
        let g = TimeGrid::default_for(2.0).unwrap();
        assert_eq!(g.nodes().len(), 2001);
        assert_eq!(*g.nodes().last().unwrap(), 100.0);
    }
}
