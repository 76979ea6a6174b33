//! Langevin particle system with Morse pair interactions and an optional
//! divergence-free drive.
//!
//! The force is `F(q) = ∇_q V(q) + α G(q)` with
//! `V(q) = Σ_{i>j} V_M(|q_i − q_j|)`, `V_M(r) = D_e (1 − e^{−a(r−r_e)})²`
//! and `G_i(q) = q_{i+1} − q_{i−1}` (periodic in the particle index).
//! `F` enters the momentum update with a minus sign, so the dynamics are
//! the usual `dp = −∇V dt − α G dt − (γ/m) p dt + σ dB`.

use crate::error::{Error, Result};

/// Fixed (non-parameter) settings. θ = [D_e, a, r_e].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinSettings {
    pub particles: usize,
    pub dim: usize,
    pub mass: f64,
    pub friction: f64,
    pub sigma: f64,
    pub dt: f64,
    pub alpha: f64,
}

impl Default for LangevinSettings {
    fn default() -> Self {
        Self {
            particles: 3,
            dim: 1,
            mass: 1.0,
            friction: 1.0,
            sigma: 0.1,
            dt: 0.01,
            alpha: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangevinState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl LangevinState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        crate::error::check_len("momenta", q.len(), p.len())?;
        if q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "Langevin state".into(),
            });
        }
        Ok(Self { q, p })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinModel {
    pub settings: LangevinSettings,
}

impl LangevinModel {
    pub const DEFAULT_THETA: [f64; 3] = [0.3, 0.3, 1.0];
    pub const PARAM_NAMES: [&'static str; 3] = ["De", "a", "re"];

    pub fn new(settings: LangevinSettings) -> Result<Self> {
        let s = &settings;
        if s.particles < 2 || s.dim == 0 {
            return Err(Error::InvalidParameter(
                "need at least two particles and one dimension".into(),
            ));
        }
        for (name, v) in [("mass", s.mass), ("sigma", s.sigma), ("dt", s.dt)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(s.friction >= 0.0) || !s.alpha.is_finite() {
            return Err(Error::InvalidParameter(
                "friction must be non-negative and alpha finite".into(),
            ));
        }
        if !(1.0 + s.friction * s.dt / (2.0 * s.mass) > 0.0) {
            return Err(Error::InvalidParameter("1 + γΔt/(2m) must be positive".into()));
        }
        Ok(Self { settings })
    }

    pub fn coords(&self) -> usize {
        self.settings.particles * self.settings.dim
    }

    /// Total force F(q) = ∇V + αG.
    pub fn force(&self, q: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        morse_force(q, self.settings.particles, self.settings.dim, theta, self.settings.alpha)
    }

    /// F(q) and its parameter Jacobian ∂F/∂θ_k for k = D_e, a, r_e.
    pub fn force_and_jacobian(&self, q: &[f64], theta: &[f64]) -> Result<(Vec<f64>, [Vec<f64>; 3])> {
        let s = &self.settings;
        let (mut f, jac) = morse_gradient_and_jacobian(q, s.particles, s.dim, theta)?;
        if s.alpha != 0.0 {
            let g = divergence_free_field(q, s.particles, s.dim);
            for (fi, gi) in f.iter_mut().zip(g) {
                *fi += s.alpha * gi;
            }
        }
        Ok((f, jac))
    }
}

/// V_M(r).
pub fn morse_potential(r: f64, theta: &[f64]) -> f64 {
    let (de, a, re) = (theta[0], theta[1], theta[2]);
    let one_minus = 1.0 - (-a * (r - re)).exp();
    de * one_minus * one_minus
}

/// V_M′(r) and ∂V_M′/∂(D_e, a, r_e).
pub fn morse_derivative(r: f64, theta: &[f64]) -> (f64, [f64; 3]) {
    let (de, a, re) = (theta[0], theta[1], theta[2]);
    let e = (-a * (r - re)).exp();
    let shape = e * (1.0 - e);
    let dv = 2.0 * de * a * shape;
    // d/dx [e(1−e)] = (1 − 2e) de/dx
    let d_de = 2.0 * a * shape;
    let d_a = 2.0 * de * shape + 2.0 * de * a * (1.0 - 2.0 * e) * (-(r - re) * e);
    let d_re = 2.0 * de * a * (1.0 - 2.0 * e) * (a * e);
    (dv, [d_de, d_a, d_re])
}

fn particle(q: &[f64], i: usize, dim: usize) -> &[f64] {
    &q[i * dim..(i + 1) * dim]
}

/// ∇_q V(q) and its parameter Jacobian.
pub fn morse_gradient_and_jacobian(
    q: &[f64],
    particles: usize,
    dim: usize,
    theta: &[f64],
) -> Result<(Vec<f64>, [Vec<f64>; 3])> {
    crate::error::check_len("positions", particles * dim, q.len())?;
    crate::error::check_len("Morse parameters", 3, theta.len())?;
    let n = q.len();
    let mut f = vec![0.0; n];
    let mut jac = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut unit = vec![0.0; dim];
    for i in 0..particles {
        for j in 0..i {
            let (qi, qj) = (particle(q, i, dim), particle(q, j, dim));
            let mut r2 = 0.0;
            for d in 0..dim {
                unit[d] = qi[d] - qj[d];
                r2 += unit[d] * unit[d];
            }
            let r = r2.sqrt();
            if r == 0.0 {
                return Err(Error::CoincidentParticles { first: j, second: i });
            }
            unit.iter_mut().for_each(|u| *u /= r);
            let (dv, dtheta) = morse_derivative(r, theta);
            for d in 0..dim {
                f[i * dim + d] += dv * unit[d];
                f[j * dim + d] -= dv * unit[d];
                for k in 0..3 {
                    jac[k][i * dim + d] += dtheta[k] * unit[d];
                    jac[k][j * dim + d] -= dtheta[k] * unit[d];
                }
            }
        }
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "Morse force".into(),
        });
    }
    Ok((f, jac))
}

/// G_i(q) = q_{i+1} − q_{i−1} with q₀ = q_N and q_{N+1} = q₁.
pub fn divergence_free_field(q: &[f64], particles: usize, dim: usize) -> Vec<f64> {
    let mut g = vec![0.0; q.len()];
    for i in 0..particles {
        let next = (i + 1) % particles;
        let prev = (i + particles - 1) % particles;
        for d in 0..dim {
            g[i * dim + d] = q[next * dim + d] - q[prev * dim + d];
        }
    }
    g
}

/// F(q) = ∇V(q) + αG(q).
pub fn morse_force(q: &[f64], particles: usize, dim: usize, theta: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let (mut f, _) = morse_gradient_and_jacobian(q, particles, dim, theta)?;
    if alpha != 0.0 {
        for (fi, gi) in f.iter_mut().zip(divergence_free_field(q, particles, dim)) {
            *fi += alpha * gi;
        }
    }
    Ok(f)
}

/// Analytic divergence of the built-in G: each G_i is independent of q_i.
pub fn divergence_check(_q: &[f64]) -> f64 {
    0.0
}

/// Central-difference divergence Σ_i ∂field_i/∂q_i at `q`.
pub fn numeric_divergence(field: impl Fn(&[f64]) -> Vec<f64>, q: &[f64], h: f64) -> f64 {
    let mut x = q.to_vec();
    let mut div = 0.0;
    for i in 0..q.len() {
        x[i] = q[i] + h;
        let up = field(&x)[i];
        x[i] = q[i] - h;
        let dn = field(&x)[i];
        x[i] = q[i];
        div += (up - dn) / (2.0 * h);
    }
    div
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    const THETA: [f64; 3] = LangevinModel::DEFAULT_THETA;

    #[test]
    fn equilibrium_separation_has_no_force() {
        let f = morse_force(&[0.0, 1.0], 2, 1, &THETA, 0.0).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn g_vanishes_at_origin() {
        assert_eq!(divergence_free_field(&[0.0; 3], 3, 1), vec![0.0; 3]);
    }

    #[test]
    fn g_is_divergence_free() {
        let mut rng = RngStream::new(4, 0);
        for _ in 0..10 {
            let q: Vec<f64> = (0..3).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let div = numeric_divergence(|x| divergence_free_field(x, 3, 1), &q, 1e-4);
            assert!(div.abs() < 1e-8);
            assert_eq!(divergence_check(&q), 0.0);
        }
    }

    #[test]
    fn non_solenoidal_field_detected() {
        let div = numeric_divergence(|x| x.to_vec(), &[0.3, -0.2, 1.0], 1e-4);
        assert!((div - 3.0).abs() < 1e-8);
    }

    #[test]
    fn coincident_particles_rejected() {
        assert!(matches!(
            morse_force(&[0.5, 0.5, 2.0], 3, 1, &THETA, 0.0),
            Err(Error::CoincidentParticles { .. })
        ));
    }

    #[test]
    fn derivative_matches_potential() {
        for r in [0.3, 0.9, 1.0, 1.7, 4.0] {
            let h = 1e-6;
            let fd = (morse_potential(r + h, &THETA) - morse_potential(r - h, &THETA)) / (2.0 * h);
            let (dv, _) = morse_derivative(r, &THETA);
            assert!((fd - dv).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn newton_third_law(q in prop::collection::vec(-3.0f64..3.0, 6), dim in 1usize..=2) {
            let particles = 6 / dim;
            let (f, _) = morse_gradient_and_jacobian(&q, particles, dim, &THETA).unwrap();
            for d in 0..dim {
                let total: f64 = (0..particles).map(|i| f[i * dim + d]).sum();
                let scale: f64 = f.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
                prop_assert!(total.abs() <= 1e-14 * scale);
            }
        }

        #[test]
        fn parameter_jacobian_matches_fd(q in prop::collection::vec(-3.0f64..3.0, 3)) {
            let (_, jac) = morse_gradient_and_jacobian(&q, 3, 1, &THETA).unwrap();
            for k in 0..3 {
                let h = 1e-6 * THETA[k];
                let mut up = THETA;
                let mut dn = THETA;
                up[k] += h;
                dn[k] -= h;
                let fu = morse_force(&q, 3, 1, &up, 0.1).unwrap();
                let fdn = morse_force(&q, 3, 1, &dn, 0.1).unwrap();
                for i in 0..3 {
                    let fd = (fu[i] - fdn[i]) / (2.0 * h);
                    let err = (fd - jac[k][i]).abs();
                    prop_assert!(err <= 1e-6 * jac[k][i].abs().max(1e-3), "k={} i={} fd={} an={}", k, i, fd, jac[k][i]);
                }
            }
        }
    }
}
