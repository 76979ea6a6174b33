//! Exact RER and FIM of jump processes whose stationary law is known on a
//! finite (possibly truncated) set of states.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::models::{JumpModel, Schlogl};
use crate::stats::KahanSum;
use crate::trajectory::EventId;

/// Discarded tail mass allowed by birth–death truncation.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// 𝔼_μ[Σ_σ′ c log(c/c̃) − (λ − λ̃)] over the weighted states of `law`.
pub fn exact_rer_ctmc<M: JumpModel>(
    model: &M,
    law: &[(M::State, f64)],
    theta: &[f64],
    perturbed: &[f64],
) -> Result<f64> {
    model.check_params(theta)?;
    model.check_params(perturbed)?;
    let per = model.events_per_group();
    let (mut a, mut b) = (vec![0.0; per], vec![0.0; per]);
    let mut total = KahanSum::new();
    for (state, w) in law {
        if *w == 0.0 {
            continue;
        }
        let mut v = 0.0;
        for group in 0..model.num_groups(state) {
            model.group_rates(state, group, theta, &mut a);
            model.group_rates(state, group, perturbed, &mut b);
            for (event, (&c, &ct)) in a.iter().zip(&b).enumerate() {
                if c > 0.0 {
                    if !(ct > 0.0) {
                        return Err(Error::AbsoluteContinuity {
                            transition: model.describe_event(state, EventId { group, event }),
                        });
                    }
                    v += c * (c / ct).ln();
                }
            }
            v -= a.iter().sum::<f64>() - b.iter().sum::<f64>();
        }
        total.add(w * v);
    }
    Ok(total.value())
}

/// 𝔼_μ[Σ_σ′ c ∇log c ∇log cᵀ].
pub fn exact_fim_ctmc<M: JumpModel>(model: &M, law: &[(M::State, f64)], theta: &[f64]) -> Result<DMatrix<f64>> {
    model.check_params(theta)?;
    let k = model.num_params();
    let per = model.events_per_group();
    let mut rates = vec![0.0; per];
    let mut grad = vec![0.0; k];
    let mut sums = vec![KahanSum::new(); k * k];
    for (state, w) in law {
        if *w == 0.0 {
            continue;
        }
        for group in 0..model.num_groups(state) {
            model.group_rates(state, group, theta, &mut rates);
            for (event, &c) in rates.iter().enumerate() {
                if c > 0.0 {
                    model.log_rate_gradient(state, EventId { group, event }, theta, &mut grad)?;
                    for i in 0..k {
                        for j in i..k {
                            sums[i * k + j].add(w * c * grad[i] * grad[j]);
                        }
                    }
                }
            }
        }
    }
    Ok(DMatrix::from_fn(k, k, |i, j| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        sums[i * k + j].value()
    }))
}

/// Stationary law of a birth–death chain on 0..=x_max by detailed balance,
/// μ(x+1) = μ(x)·birth(x)/death(x+1).
///
/// Weights are propagated in log space. The recursion is continued past
/// `x_max` to bound the discarded tail.
pub fn birth_death_stationary(
    birth: impl Fn(u64) -> f64,
    death: impl Fn(u64) -> f64,
    x_max: usize,
) -> Result<Vec<f64>> {
    let mut logw = Vec::with_capacity(x_max + 1);
    logw.push(0.0);
    for x in 0..x_max as u64 {
        let (b, d) = (birth(x), death(x + 1));
        if !(b > 0.0) {
            // the chain never leaves 0..=x: nothing beyond carries mass
            logw.resize(x_max + 1, f64::NEG_INFINITY);
            return Ok(normalise(&logw));
        }
        if !(d > 0.0) {
            return Err(Error::InvalidParameter(format!("death rate at x={} must be positive", x + 1)));
        }
        logw.push(logw[x as usize] + b.ln() - d.ln());
    }
    let peak = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: f64 = logw.iter().map(|l| (l - peak).exp()).sum();

    let mut tail = 0.0;
    let mut l = logw[x_max];
    let mut x = x_max as u64;
    let limit = 10 * (x_max as u64 + 1) + 1000;
    loop {
        let (b, d) = (birth(x), death(x + 1));
        if !(b > 0.0) {
            break;
        }
        if !(d > 0.0) {
            tail = f64::INFINITY;
            break;
        }
        let step = b.ln() - d.ln();
        l += step;
        x += 1;
        tail += (l - peak).exp();
        if (l - peak) < -80.0 && step < 0.0 {
            break;
        }
        if x > limit {
            tail = f64::INFINITY;
            break;
        }
    }
    let tail = tail / (kept + tail);
    if !(tail < TAIL_TOLERANCE) {
        return Err(Error::TruncationTooSmall { x_max, tail });
    }
    Ok(normalise(&logw))
}

/// [`birth_death_stationary`], doubling `x_max` until the tail is small.
pub fn birth_death_stationary_auto(
    birth: impl Fn(u64) -> f64,
    death: impl Fn(u64) -> f64,
    x_max: usize,
) -> Result<Vec<f64>> {
    let mut cut = x_max.max(1);
    loop {
        match birth_death_stationary(&birth, &death, cut) {
            Err(Error::TruncationTooSmall { .. }) if cut < 1 << 24 => cut *= 2,
            other => return other,
        }
    }
}

fn normalise(logw: &[f64]) -> Vec<f64> {
    let peak = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - peak).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Interior local maxima of a law on 0..n.
pub fn interior_modes(mu: &[f64]) -> Vec<usize> {
    (1..mu.len().saturating_sub(1))
        .filter(|&x| mu[x] > mu[x - 1] && mu[x] >= mu[x + 1])
        .collect()
}

/// Schlögl stationary law under θ as `(x, μ(x))` pairs, truncated at
/// `x_max` or further if needed.
pub fn schlogl_law(model: &Schlogl, theta: &[f64], x_max: usize) -> Result<Vec<(u64, f64)>> {
    use crate::models::JumpModel as _;
    model.check_params(theta)?;
    let mu = birth_death_stationary_auto(
        |x| model.birth_rate(x, theta),
        |x| model.death_rate(x, theta),
        x_max,
    )?;
    Ok(mu.into_iter().enumerate().map(|(x, m)| (x as u64, m)).collect())
}
