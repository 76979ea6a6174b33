//! Finite-state chains in matrix form and their exact path-space
//! quantities.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::models::{ChainModel, JumpModel};
use crate::rng::RngStream;
use crate::stats::KahanSum;
use crate::trajectory::EventId;

const ROW_TOLERANCE: f64 = 1e-12;
/// Largest state count solved densely.
pub const DENSE_LIMIT: usize = 2000;
/// Largest number of paths `brute_force_path_re` will enumerate.
pub const ENUMERATION_BOUND: u128 = 10_000_000;

/// A row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    p: DMatrix<f64>,
}

impl FiniteChain {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != p.ncols() || p.nrows() == 0 {
            return Err(Error::InvalidConfig(format!(
                "transition matrix must be square and non-empty, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        for (i, row) in p.row_iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidConfig(format!("row {i} has entry {v} outside [0,1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidConfig(format!("row {i} sums to {s}, not 1")));
            }
        }
        Ok(Self { p })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        if flat.len() != n * n {
            return Err(Error::InvalidConfig("ragged transition matrix".into()));
        }
        Self::new(DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn size(&self) -> usize {
        self.p.nrows()
    }
}

/// Parses whitespace-separated rows; blank lines and `#` comments are
/// skipped.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: '{t}' is not a number", n + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} entries, found {}",
                    n + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no matrix rows".into()));
    }
    let cols = rows[0].len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn reachable(adj: &DMatrix<f64>, transpose: bool) -> Vec<bool> {
    let n = adj.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            let w = if transpose { adj[(j, i)] } else { adj[(i, j)] };
            if w > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

fn check_irreducible(adj: &DMatrix<f64>) -> Result<()> {
    if reachable(adj, false).iter().all(|&b| b) && reachable(adj, true).iter().all(|&b| b) {
        Ok(())
    } else {
        Err(Error::Reducible)
    }
}

/// Stationary law μP = μ of an irreducible chain: dense solve up to
/// [`DENSE_LIMIT`] states, power iteration beyond.
pub fn finite_stationary(chain: &FiniteChain) -> Result<Vec<f64>> {
    let p = chain.matrix();
    check_irreducible(p)?;
    if chain.size() > DENSE_LIMIT {
        return stationary_power_iteration(chain, 1e-12, 10_000_000);
    }
    let n = chain.size();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let mu = a
        .lu()
        .solve(&rhs)
        .ok_or(Error::Reducible)?;
    Ok(clean_law(mu.iter().copied().collect()))
}

fn clean_law(mut mu: Vec<f64>) -> Vec<f64> {
    for v in mu.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|v| *v /= s);
    mu
}

/// Power iteration on the lazy chain (I+P)/2 until ‖μP − μ‖₁ < `tol`.
pub fn stationary_power_iteration(chain: &FiniteChain, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let p = chain.matrix();
    check_irreducible(p)?;
    let n = chain.size();
    let mut mu = nalgebra::RowDVector::from_element(n, 1.0 / n as f64);
    for _ in 0..max_iter {
        let next = &mu * p;
        let residual: f64 = (&next - &mu).iter().map(|v| v.abs()).sum();
        if residual < tol {
            return Ok(clean_law(next.iter().copied().collect()));
        }
        mu = (&mu + &next) * 0.5;
    }
    Err(Error::Inconsistent(format!("power iteration did not reach residual {tol}")))
}

/// Stationary law of a rate matrix (zero diagonal), via uniformization.
pub fn ctmc_stationary(rates: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = rates.nrows();
    check_len("rate matrix columns", n, rates.ncols())?;
    let exits: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| rates[(i, j)]).sum())
        .collect();
    let lam = exits.iter().copied().fold(0.0, f64::max);
    if !(lam > 0.0) {
        return Err(Error::Reducible);
    }
    let p = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 - exits[i] / lam
        } else {
            rates[(i, j)] / lam
        }
    });
    finite_stationary(&FiniteChain { p })
}

/// 𝓡(μ|ν) = Σ μ log(μ/ν).
pub fn stationary_relative_entropy(mu: &[f64], nu: &[f64]) -> Result<f64> {
    check_len("stationary law", mu.len(), nu.len())?;
    let mut s = KahanSum::new();
    for (i, (&a, &b)) in mu.iter().zip(nu).enumerate() {
        if a > 0.0 {
            if !(b > 0.0) {
                return Err(Error::AbsoluteContinuity {
                    transition: format!("stationary mass at state {i}"),
                });
            }
            s.add(a * (a / b).ln());
        }
    }
    Ok(s.value())
}

pub(crate) fn weighted_row_entropy(mu: &[f64], p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    let n = p.nrows();
    check_len("stationary law", n, mu.len())?;
    check_len("perturbed matrix", n, q.nrows())?;
    let mut s = KahanSum::new();
    for i in 0..n {
        if mu[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            let a = p[(i, j)];
            if a > 0.0 {
                let b = q[(i, j)];
                if !(b > 0.0) {
                    return Err(Error::AbsoluteContinuity {
                        transition: format!("{i} -> {j}"),
                    });
                }
                s.add(mu[i] * a * (a / b).ln());
            }
        }
    }
    Ok(s.value())
}

pub(crate) fn weighted_row_fisher(mu: &[f64], p: &DMatrix<f64>, log_grads: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    check_len("stationary law", n, mu.len())?;
    let k = log_grads.len();
    let mut f = DMatrix::zeros(k, k);
    for a in 0..k {
        check_len("log-gradient matrix", n, log_grads[a].nrows())?;
        for b in a..k {
            let mut s = KahanSum::new();
            for i in 0..n {
                for j in 0..n {
                    if p[(i, j)] > 0.0 {
                        s.add(mu[i] * p[(i, j)] * log_grads[a][(i, j)] * log_grads[b][(i, j)]);
                    }
                }
            }
            f[(a, b)] = s.value();
            f[(b, a)] = s.value();
        }
    }
    Ok(f)
}

/// 𝓗 = Σ_σ μ(σ) Σ_σ′ p log(p/p̃).
pub fn exact_rer_chain(p: &FiniteChain, perturbed: &FiniteChain, mu: &[f64]) -> Result<f64> {
    weighted_row_entropy(mu, p.matrix(), perturbed.matrix())
}

/// F = Σ_σ μ(σ) Σ_σ′ p ∇log p ∇log pᵀ, with `log_grads[k]` holding
/// ∂log p(σ,σ′)/∂θ_k.
pub fn exact_fim_chain(p: &FiniteChain, log_grads: &[DMatrix<f64>], mu: &[f64]) -> Result<DMatrix<f64>> {
    weighted_row_fisher(mu, p.matrix(), log_grads)
}

/// Relative entropy between the stationary path laws on σ₀…σ_M by full
/// enumeration.
pub fn brute_force_path_re(p: &FiniteChain, perturbed: &FiniteChain, horizon: usize) -> Result<f64> {
    let n = p.size();
    check_len("perturbed chain", n, perturbed.size())?;
    let paths = (n as u128).checked_pow(horizon as u32 + 1).unwrap_or(u128::MAX);
    if paths > ENUMERATION_BOUND {
        return Err(Error::EnumerationBound {
            paths,
            bound: ENUMERATION_BOUND,
        });
    }
    let mu = finite_stationary(p)?;
    let nu = finite_stationary(perturbed)?;
    let (a, b) = (p.matrix(), perturbed.matrix());
    let mut total = KahanSum::new();
    // depth-first over (state, depth, probability, log-ratio)
    let mut stack: Vec<(usize, usize, f64, f64)> = Vec::new();
    for s in 0..n {
        if mu[s] > 0.0 {
            if !(nu[s] > 0.0) {
                return Err(Error::AbsoluteContinuity {
                    transition: format!("initial state {s}"),
                });
            }
            stack.push((s, 0, mu[s], (mu[s] / nu[s]).ln()));
        }
    }
    while let Some((s, depth, prob, lr)) = stack.pop() {
        if depth == horizon {
            total.add(prob * lr);
            continue;
        }
        for t in 0..n {
            let x = a[(s, t)];
            if x > 0.0 {
                let y = b[(s, t)];
                if !(y > 0.0) {
                    return Err(Error::AbsoluteContinuity {
                        transition: format!("{s} -> {t}"),
                    });
                }
                stack.push((t, depth + 1, prob * x, lr + (x / y).ln()));
            }
        }
    }
    Ok(total.value())
}

/// A finite chain with softmax rows,
/// p^θ(σ,·) ∝ exp(B(σ,·) + Σ_k θ_k W_k(σ,·)), restricted to the positive
/// entries of a support mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxChain {
    base: DMatrix<f64>,
    weights: Vec<DMatrix<f64>>,
    support: DMatrix<f64>,
}

impl SoftmaxChain {
    pub fn new(base: DMatrix<f64>, weights: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = base.nrows();
        let support = DMatrix::from_element(n, n, 1.0);
        Self::with_support(base, weights, support)
    }

    pub fn with_support(base: DMatrix<f64>, weights: Vec<DMatrix<f64>>, support: DMatrix<f64>) -> Result<Self> {
        let n = base.nrows();
        check_len("base columns", n, base.ncols())?;
        for w in &weights {
            check_len("weight rows", n, w.nrows())?;
            check_len("weight columns", n, w.ncols())?;
        }
        check_len("support rows", n, support.nrows())?;
        for i in 0..n {
            if !(0..n).any(|j| support[(i, j)] > 0.0) {
                return Err(Error::InvalidConfig(format!("row {i} has empty support")));
            }
        }
        Ok(Self { base, weights, support })
    }

    /// A random chain with `k` parameters, full support, entries from `rng`.
    pub fn random(size: usize, k: usize, rng: &mut RngStream) -> Self {
        let mut m = || DMatrix::from_fn(size, size, |_, _| rng.uniform_range(-1.0, 1.0));
        let base = m();
        let weights = (0..k).map(|_| m()).collect();
        Self::new(base, weights).expect("well-formed random chain")
    }

    pub fn size(&self) -> usize {
        self.base.nrows()
    }

    fn row(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        let n = self.size();
        let logits: Vec<f64> = (0..n)
            .map(|j| {
                if self.support[(i, j)] > 0.0 {
                    self.base[(i, j)] + self.weights.iter().zip(theta).map(|(w, t)| t * w[(i, j)]).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn matrix(&self, theta: &[f64]) -> Result<FiniteChain> {
        check_len("parameters", self.weights.len(), theta.len())?;
        let n = self.size();
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i, theta).into_iter().enumerate() {
                p[(i, j)] = v;
            }
        }
        Ok(FiniteChain { p })
    }

    /// ∂log p(σ,σ′)/∂θ_k = W_k(σ,σ′) − Σ_τ p(σ,τ) W_k(σ,τ).
    pub fn log_gradients(&self, theta: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let p = self.matrix(theta)?;
        let n = self.size();
        Ok(self
            .weights
            .iter()
            .map(|w| {
                DMatrix::from_fn(n, n, |i, j| {
                    let mean: f64 = (0..n).map(|t| p.p[(i, t)] * w[(i, t)]).sum();
                    w[(i, j)] - mean
                })
            })
            .collect())
    }
}

impl ChainModel for SoftmaxChain {
    type State = usize;

    fn num_params(&self) -> usize {
        self.weights.len()
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.weights.len()).map(|k| format!("theta{k}")).collect()
    }

    fn check_params(&self, theta: &[f64]) -> Result<()> {
        check_len("parameters", self.weights.len(), theta.len())?;
        if theta.iter().all(|t| t.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("non-finite parameter".into()))
        }
    }

    fn log_density(&self, from: &usize, to: &usize, theta: &[f64]) -> Result<f64> {
        Ok(self.row(*from, theta)[*to].ln())
    }

    fn log_density_gradient(&self, from: &usize, to: &usize, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        let row = self.row(*from, theta);
        for (g, w) in grad.iter_mut().zip(&self.weights) {
            let mean: f64 = (0..row.len()).map(|t| row[t] * w[(*from, t)]).sum();
            *g = w[(*from, *to)] - mean;
        }
        Ok(row[*to].ln())
    }

    fn sample_next(&self, from: &usize, theta: &[f64], rng: &mut RngStream) -> Result<usize> {
        let row = self.row(*from, theta);
        let u = rng.uniform();
        let mut cum = 0.0;
        let mut last = 0;
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                cum += p;
                last = j;
                if cum > u {
                    return Ok(j);
                }
            }
        }
        Ok(last)
    }

    fn conditional_relative_entropy(&self, from: &usize, theta: &[f64], perturbed: &[f64]) -> Result<f64> {
        let p = self.row(*from, theta);
        let q = self.row(*from, perturbed);
        let mut s = 0.0;
        for (j, (&a, &b)) in p.iter().zip(&q).enumerate() {
            if a > 0.0 {
                if !(b > 0.0) {
                    return Err(Error::AbsoluteContinuity {
                        transition: format!("{from} -> {j}"),
                    });
                }
                s += a * (a / b).ln();
            }
        }
        Ok(s)
    }

    fn conditional_fisher(&self, from: &usize, theta: &[f64]) -> Result<DMatrix<f64>> {
        let row = self.row(*from, theta);
        let k = self.weights.len();
        let n = row.len();
        let g: Vec<Vec<f64>> = self
            .weights
            .iter()
            .map(|w| {
                let mean: f64 = (0..n).map(|t| row[t] * w[(*from, t)]).sum();
                (0..n).map(|j| w[(*from, j)] - mean).collect()
            })
            .collect();
        Ok(DMatrix::from_fn(k, k, |a, b| {
            (0..n).filter(|&j| row[j] > 0.0).map(|j| row[j] * g[a][j] * g[b][j]).sum()
        }))
    }
}

/// A finite jump process whose rates are each proportional to at most one
/// parameter: c^θ(σ,σ′) = B(σ,σ′)·θ_{idx(σ,σ′)}.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteCtmc {
    base: DMatrix<f64>,
    index: Vec<Option<usize>>,
    k: usize,
}

impl FiniteCtmc {
    /// `index[i*n+j]` names the parameter scaling the (i,j) rate.
    pub fn new(base: DMatrix<f64>, index: Vec<Option<usize>>, k: usize) -> Result<Self> {
        let n = base.nrows();
        check_len("rate matrix columns", n, base.ncols())?;
        check_len("parameter index", n * n, index.len())?;
        for i in 0..n {
            if base[(i, i)] != 0.0 {
                return Err(Error::InvalidConfig("rate matrix diagonal must be zero".into()));
            }
        }
        if base.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidConfig("rates must be non-negative".into()));
        }
        if index.iter().flatten().any(|&i| i >= k) {
            return Err(Error::InvalidConfig("parameter index out of range".into()));
        }
        Ok(Self { base, index, k })
    }

    /// Two states with c(0,1) = θ₀ and c(1,0) = θ₁.
    pub fn two_state() -> Self {
        let base = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        Self::new(base, vec![None, Some(0), Some(1), None], 2).expect("valid")
    }

    pub fn size(&self) -> usize {
        self.base.nrows()
    }

    pub fn rate_matrix(&self, theta: &[f64]) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| {
            self.base[(i, j)] * self.index[i * n + j].map_or(1.0, |k| theta[k])
        })
    }
}

impl JumpModel for FiniteCtmc {
    type State = usize;

    fn num_params(&self) -> usize {
        self.k
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.k).map(|k| format!("theta{k}")).collect()
    }

    fn check_params(&self, theta: &[f64]) -> Result<()> {
        check_len("parameters", self.k, theta.len())?;
        match theta.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
            Some(t) => Err(Error::InvalidParameter(format!("rate parameter {t} must be positive"))),
            None => Ok(()),
        }
    }

    fn num_groups(&self, _: &usize) -> usize {
        1
    }

    fn events_per_group(&self) -> usize {
        self.size()
    }

    fn group_rates(&self, state: &usize, _: usize, theta: &[f64], rates: &mut [f64]) {
        let n = self.size();
        for (j, r) in rates.iter_mut().enumerate() {
            *r = self.base[(*state, j)] * self.index[*state * n + j].map_or(1.0, |k| theta[k]);
        }
    }

    fn log_rate_gradient(&self, state: &usize, id: EventId, theta: &[f64], grad: &mut [f64]) -> Result<()> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if let Some(k) = self.index[*state * self.size() + id.event] {
            grad[k] = 1.0 / theta[k];
        }
        Ok(())
    }

    fn execute(&self, state: &mut usize, id: EventId, _: &mut RngStream, touched: &mut Vec<usize>) -> Result<()> {
        *state = id.event;
        touched.clear();
        touched.push(0);
        Ok(())
    }

    fn state_digest(&self, state: &usize) -> String {
        state.to_string()
    }
}
