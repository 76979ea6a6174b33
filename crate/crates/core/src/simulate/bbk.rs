//! BBK integrator for the Langevin system and its transition density.
//!
//! One step with noises ΔWᵢ, ΔWᵢ₊½ ~ N(0, Δt/2·I):
//!
//! ```text
//! p½  = p − F(q)Δt/2 − (γ/m) p Δt/2 + σ ΔWᵢ
//! q′  = q + p½ Δt/m
//! p′  = (p½ − F(q′)Δt/2 + σ ΔWᵢ₊½) / (1 + γΔt/(2m))
//! ```
//!
//! The chain (q,p) → (q′,p′) is non-degenerate with density
//! P(q′|q,p)·P(p′|q′,q,p), both Gaussian with θ-independent covariances.

use std::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::models::langevin::{LangevinModel, LangevinSettings, LangevinState};
use crate::models::ChainModel;
use crate::rng::RngStream;

/// The two Gaussian increment vectors consumed by one step.
#[derive(Debug, Clone, PartialEq)]
pub struct BbkNoise {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl BbkNoise {
    /// Draws `first` then `second`, each N(0, Δt/2) per coordinate.
    pub fn draw(coords: usize, dt: f64, rng: &mut RngStream) -> Self {
        let sd = (dt / 2.0).sqrt();
        let first = (0..coords).map(|_| sd * rng.standard_normal()).collect();
        let second = (0..coords).map(|_| sd * rng.standard_normal()).collect();
        Self { first, second }
    }
}

/// One step with an arbitrary force field. Returns (q′, p′).
pub fn bbk_update(
    settings: &LangevinSettings,
    q: &[f64],
    p: &[f64],
    force: impl Fn(&[f64]) -> Result<Vec<f64>>,
    noise: &BbkNoise,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = q.len();
    check_len("momenta", n, p.len())?;
    check_len("first noise vector", n, noise.first.len())?;
    check_len("second noise vector", n, noise.second.len())?;
    let LangevinSettings {
        mass: m,
        friction: gamma,
        sigma,
        dt,
        ..
    } = *settings;
    let implicit = 1.0 + gamma * dt / (2.0 * m);
    if !(implicit > 0.0) {
        return Err(Error::InvalidParameter("1 + γΔt/(2m) must be positive".into()));
    }
    let f0 = force(q)?;
    check_finite_force(&f0)?;
    let half: Vec<f64> = (0..n)
        .map(|i| p[i] - f0[i] * dt / 2.0 - gamma / m * p[i] * dt / 2.0 + sigma * noise.first[i])
        .collect();
    let q1: Vec<f64> = (0..n).map(|i| q[i] + half[i] * dt / m).collect();
    let f1 = force(&q1)?;
    check_finite_force(&f1)?;
    let p1 = (0..n)
        .map(|i| (half[i] - f1[i] * dt / 2.0 + sigma * noise.second[i]) / implicit)
        .collect();
    Ok((q1, p1))
}

fn check_finite_force(f: &[f64]) -> Result<()> {
    let bad: Vec<usize> = (0..f.len()).filter(|&i| !f[i].is_finite()).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: format!("force at coordinates {bad:?}"),
        })
    }
}

pub fn bbk_step_with_noise(
    model: &LangevinModel,
    state: &LangevinState,
    theta: &[f64],
    noise: &BbkNoise,
) -> Result<LangevinState> {
    let (q, p) = bbk_update(&model.settings, &state.q, &state.p, |x| model.force(x, theta), noise)?;
    Ok(LangevinState { q, p })
}

pub fn bbk_step(
    model: &LangevinModel,
    state: &LangevinState,
    theta: &[f64],
    rng: &mut RngStream,
) -> Result<LangevinState> {
    let noise = BbkNoise::draw(state.q.len(), model.settings.dt, rng);
    bbk_step_with_noise(model, state, theta, &noise)
}

/// Positions uniform in `[0, box_length)` and momenta uniform in
/// `[−max_momentum, max_momentum]`, per coordinate. Positions are drawn
/// first.
pub fn uniform_initial_state(
    model: &LangevinModel,
    box_length: f64,
    max_momentum: f64,
    rng: &mut RngStream,
) -> Result<LangevinState> {
    if !(box_length > 0.0) || !(max_momentum >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "initial box {box_length} must be positive and momentum bound {max_momentum} non-negative"
        )));
    }
    let n = model.coords();
    let q = (0..n).map(|_| rng.uniform_range(0.0, box_length)).collect();
    let p = (0..n).map(|_| rng.uniform_range(-max_momentum, max_momentum)).collect();
    LangevinState::new(q, p)
}

/// Residuals of the two Gaussian factors; both vanish-in-mean under the
/// generating parameters.
fn residuals(
    settings: &LangevinSettings,
    prev: &LangevinState,
    next: &LangevinState,
    f_prev: &[f64],
    f_next: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let LangevinSettings {
        mass: m,
        friction: gamma,
        dt,
        ..
    } = *settings;
    let implicit = 1.0 + gamma * dt / (2.0 * m);
    let n = prev.q.len();
    let r0 = (0..n)
        .map(|i| {
            next.q[i] - prev.q[i]
                - dt / m * (prev.p[i] - f_prev[i] * dt / 2.0 - gamma / m * prev.p[i] * dt / 2.0)
        })
        .collect();
    let r1 = (0..n)
        .map(|i| implicit * next.p[i] - (m / dt * (next.q[i] - prev.q[i]) - dt / 2.0 * f_next[i]))
        .collect();
    (r0, r1)
}

fn log_normalisers(settings: &LangevinSettings, n: usize) -> f64 {
    let LangevinSettings {
        mass: m,
        friction: gamma,
        sigma,
        dt,
        ..
    } = *settings;
    let implicit = 1.0 + gamma * dt / (2.0 * m);
    let var_q = sigma * sigma * dt.powi(3) / (2.0 * m * m);
    let var_p = sigma * sigma * dt / (2.0 * implicit * implicit);
    -0.5 * n as f64 * ((2.0 * PI * var_q).ln() + (2.0 * PI * var_p).ln())
}

/// log p^θ((q,p) → (q′,p′)) and ∇_θ log p^θ.
pub fn langevin_log_density(
    model: &LangevinModel,
    prev: &LangevinState,
    next: &LangevinState,
    theta: &[f64],
) -> Result<(f64, [f64; 3])> {
    let s = &model.settings;
    let (f_prev, j_prev) = model.force_and_jacobian(&prev.q, theta)?;
    let (f_next, j_next) = model.force_and_jacobian(&next.q, theta)?;
    let (r0, r1) = residuals(s, prev, next, &f_prev, &f_next);
    let (m, sig2, dt) = (s.mass, s.sigma * s.sigma, s.dt);
    let a0 = m * m / (sig2 * dt.powi(3));
    let a1 = 1.0 / (sig2 * dt);
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let log_p = -a0 * sq(&r0) - a1 * sq(&r1) + log_normalisers(s, r0.len());
    // ∂r0/∂θ = (Δt²/2m) ∂F(q)/∂θ,  ∂r1/∂θ = (Δt/2) ∂F(q′)/∂θ
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut grad = [0.0; 3];
    for k in 0..3 {
        grad[k] = -2.0 * a0 * dt * dt / (2.0 * m) * dot(&r0, &j_prev[k])
            - 2.0 * a1 * dt / 2.0 * dot(&r1, &j_next[k]);
    }
    Ok((log_p, grad))
}

impl ChainModel for LangevinModel {
    type State = LangevinState;

    fn num_params(&self) -> usize {
        3
    }

    fn param_names(&self) -> Vec<String> {
        Self::PARAM_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn check_params(&self, theta: &[f64]) -> Result<()> {
        check_len("Morse parameters", 3, theta.len())?;
        if let Some((name, v)) = Self::PARAM_NAMES
            .iter()
            .zip(theta)
            .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidParameter(format!("{name} = {v} must be strictly positive")));
        }
        Ok(())
    }

    fn log_density(&self, from: &LangevinState, to: &LangevinState, theta: &[f64]) -> Result<f64> {
        let s = &self.settings;
        let f_prev = self.force(&from.q, theta)?;
        let f_next = self.force(&to.q, theta)?;
        let (r0, r1) = residuals(s, from, to, &f_prev, &f_next);
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let (m, sig2, dt) = (s.mass, s.sigma * s.sigma, s.dt);
        Ok(-m * m / (sig2 * dt.powi(3)) * sq(&r0) - sq(&r1) / (sig2 * dt) + log_normalisers(s, r0.len()))
    }

    fn log_density_gradient(
        &self,
        from: &LangevinState,
        to: &LangevinState,
        theta: &[f64],
        grad: &mut [f64],
    ) -> Result<f64> {
        let (lp, g) = langevin_log_density(self, from, to, theta)?;
        grad[..3].copy_from_slice(&g);
        Ok(lp)
    }

    fn sample_next(&self, from: &LangevinState, theta: &[f64], rng: &mut RngStream) -> Result<LangevinState> {
        bbk_step(self, from, theta, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::langevin::LangevinSettings;

    fn deterministic(gamma: f64) -> LangevinSettings {
        LangevinSettings {
            particles: 2,
            dim: 1,
            mass: 1.0,
            friction: gamma,
            sigma: 0.0,
            dt: 0.01,
            alpha: 0.0,
        }
    }

    fn zero_noise(n: usize) -> BbkNoise {
        BbkNoise {
            first: vec![0.0; n],
            second: vec![0.0; n],
        }
    }

    #[test]
    fn free_flight() {
        let s = deterministic(0.0);
        let (q, p) = bbk_update(&s, &[0.0, 1.0], &[0.5, -2.0], |x| Ok(vec![0.0; x.len()]), &zero_noise(2)).unwrap();
        assert!((q[0] - 0.005).abs() < 1e-15 && (q[1] - 0.98).abs() < 1e-15);
        assert_eq!(p, vec![0.5, -2.0]);
    }

    #[test]
    fn pure_friction_decays() {
        let s = deterministic(1.0);
        let mut q = vec![0.0, 1.0];
        let mut p = vec![0.5, -2.0];
        for _ in 0..50 {
            let (q1, p1) = bbk_update(&s, &q, &p, |x| Ok(vec![0.0; x.len()]), &zero_noise(2)).unwrap();
            for i in 0..2 {
                assert!(p1[i].abs() < p[i].abs());
            }
            q = q1;
            p = p1;
        }
    }

    #[test]
    fn harmonic_energy_drift() {
        let s = LangevinSettings {
            particles: 1,
            ..deterministic(0.0)
        };
        let spring = |x: &[f64]| Ok(x.to_vec());
        let energy = |q: &[f64], p: &[f64]| 0.5 * (q[0] * q[0] + p[0] * p[0]);
        let (mut q, mut p) = (vec![1.0], vec![0.0]);
        let e0 = energy(&q, &p);
        for _ in 0..1000 {
            let (q1, p1) = bbk_update(&s, &q, &p, spring, &zero_noise(1)).unwrap();
            q = q1;
            p = p1;
            assert!(((energy(&q, &p) - e0) / e0).abs() < 1e-4);
        }
    }

    #[test]
    fn frictionless_steps_are_reversible() {
        let s = LangevinSettings {
            particles: 3,
            ..deterministic(0.0)
        };
        let model = LangevinModel { settings: s };
        let theta = LangevinModel::DEFAULT_THETA;
        let q0 = vec![0.1, 1.2, 2.05];
        let p0 = vec![0.3, -0.1, 0.2];
        let force = |x: &[f64]| model.force(x, &theta);
        let (mut q, mut p) = (q0.clone(), p0.clone());
        for _ in 0..100 {
            (q, p) = bbk_update(&s, &q, &p, force, &zero_noise(3)).unwrap();
        }
        p.iter_mut().for_each(|v| *v = -*v);
        for _ in 0..100 {
            (q, p) = bbk_update(&s, &q, &p, force, &zero_noise(3)).unwrap();
        }
        for i in 0..3 {
            assert!((q[i] - q0[i]).abs() < 1e-12);
            assert!((p[i] + p0[i]).abs() < 1e-12);
        }
    }

    fn table_model(alpha: f64) -> LangevinModel {
        LangevinModel::new(LangevinSettings {
            alpha,
            ..LangevinSettings::default()
        })
        .unwrap()
    }

    #[test]
    fn density_of_generated_step_matches_noise_density() {
        let model = table_model(0.1);
        let theta = LangevinModel::DEFAULT_THETA;
        let prev = LangevinState::new(vec![0.0, 1.1, 1.9], vec![0.05, -0.02, 0.01]).unwrap();
        let mut rng = RngStream::new(8, 0);
        let s = model.settings;
        let implicit = 1.0 + s.friction * s.dt / (2.0 * s.mass);
        for _ in 0..10 {
            let noise = BbkNoise::draw(3, s.dt, &mut rng);
            let next = bbk_step_with_noise(&model, &prev, &theta, &noise).unwrap();
            let (lp, _) = langevin_log_density(&model, &prev, &next, &theta).unwrap();
            let var = s.dt / 2.0;
            let log_phi = |w: &[f64]| {
                w.iter()
                    .map(|x| -x * x / (2.0 * var) - 0.5 * (2.0 * PI * var).ln())
                    .sum::<f64>()
            };
            let jac = 3.0 * (s.sigma * s.dt / s.mass).ln() + 3.0 * (s.sigma / implicit).ln();
            let expected = log_phi(&noise.first) + log_phi(&noise.second) - jac;
            assert!((lp - expected).abs() < 1e-8 * expected.abs().max(1.0), "{lp} vs {expected}");
            assert!((model.log_density(&prev, &next, &theta).unwrap() - lp).abs() < 1e-9);
        }
    }

    #[test]
    fn density_gradient_matches_fd() {
        let model = table_model(0.1);
        let theta = LangevinModel::DEFAULT_THETA;
        let mut rng = RngStream::new(9, 0);
        let mut state = LangevinState::new(vec![0.0, 0.9, 2.1], vec![0.0; 3]).unwrap();
        for _ in 0..20 {
            let next = bbk_step(&model, &state, &theta, &mut rng).unwrap();
            let (_, g) = langevin_log_density(&model, &state, &next, &theta).unwrap();
            for k in 0..3 {
                let h = 1e-5 * theta[k];
                let mut up = theta;
                let mut dn = theta;
                up[k] += h;
                dn[k] -= h;
                let fd = (model.log_density(&state, &next, &up).unwrap()
                    - model.log_density(&state, &next, &dn).unwrap())
                    / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-2), "k={k} fd={fd} an={}", g[k]);
            }
            state = next;
        }
    }
}
