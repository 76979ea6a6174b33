//! Estimators for continuous-time jump processes.
//!
//! The H1 forms need, at every visited state, a sum over all events. Those
//! sums are cached per event group and refreshed only for the groups an
//! event touched; totals are re-summed from scratch once per `groups`
//! group updates so rounding drift stays bounded and replay is exact.

use crate::error::{Error, Result};
use crate::estimators::{
    pack_outer, perturbed_parameters, EstimatorOptions, Estimate, FimEstimate, FimStats, RatioStats,
};
use crate::models::JumpModel;
use crate::params::Perturbation;
use crate::simulate::JumpHook;
use crate::stats::ConvergenceTrace;
use crate::trajectory::EventId;

#[derive(Debug, Clone, Default)]
struct GroupCache {
    width: usize,
    groups: usize,
    per_group: Vec<f64>,
    totals: Vec<f64>,
    updates: usize,
    fresh: Vec<f64>,
}

impl GroupCache {
    fn new(width: usize) -> Self {
        Self {
            width,
            totals: vec![0.0; width],
            fresh: vec![0.0; width],
            ..Default::default()
        }
    }

    fn rebuild(&mut self, groups: usize, mut eval: impl FnMut(usize, &mut [f64]) -> Result<()>) -> Result<()> {
        self.groups = groups;
        self.per_group = vec![0.0; groups * self.width];
        for g in 0..groups {
            eval(g, &mut self.per_group[g * self.width..(g + 1) * self.width])?;
        }
        self.resum();
        Ok(())
    }

    fn resum(&mut self) {
        self.totals.iter_mut().for_each(|t| *t = 0.0);
        for row in self.per_group.chunks(self.width.max(1)) {
            for (t, v) in self.totals.iter_mut().zip(row) {
                *t += v;
            }
        }
        self.updates = 0;
    }

    fn update(
        &mut self,
        groups: usize,
        touched: &[usize],
        mut eval: impl FnMut(usize, &mut [f64]) -> Result<()>,
    ) -> Result<()> {
        if groups != self.groups {
            return self.rebuild(groups, eval);
        }
        let w = self.width;
        for &g in touched {
            eval(g, &mut self.fresh)?;
            let old = &mut self.per_group[g * w..(g + 1) * w];
            for ((t, o), n) in self.totals.iter_mut().zip(old.iter_mut()).zip(&self.fresh) {
                *t += n - *o;
                *o = *n;
            }
        }
        self.updates += touched.len();
        if self.updates >= self.groups {
            self.resum();
        }
        Ok(())
    }
}

struct RateScratch {
    base: Vec<f64>,
    pert: Vec<f64>,
    grad: Vec<f64>,
    packed: Vec<f64>,
}

impl RateScratch {
    fn new(events: usize, k: usize) -> Self {
        Self {
            base: vec![0.0; events],
            pert: vec![0.0; events],
            grad: vec![0.0; k],
            packed: Vec::with_capacity(k * (k + 1) / 2),
        }
    }
}

fn continuity_error<M: JumpModel>(model: &M, state: &M::State, id: EventId) -> Error {
    Error::AbsoluteContinuity {
        transition: model.describe_event(state, id),
    }
}

/// Σ_e c log(c/c̃) − (λ_g − λ̃_g) over the events of one group, per direction.
fn h1_group<M: JumpModel>(
    model: &M,
    state: &M::State,
    group: usize,
    theta: &[f64],
    perturbed: &[Vec<f64>],
    s: &mut RateScratch,
    out: &mut [f64],
) -> Result<()> {
    model.group_rates(state, group, theta, &mut s.base);
    let lambda: f64 = s.base.iter().sum();
    for (d, p) in perturbed.iter().enumerate() {
        model.group_rates(state, group, p, &mut s.pert);
        let mut v = 0.0;
        for (e, (&c, &ct)) in s.base.iter().zip(&s.pert).enumerate() {
            if c > 0.0 {
                if !(ct > 0.0) {
                    return Err(continuity_error(model, state, EventId { group, event: e }));
                }
                v += c * (c / ct).ln();
            }
        }
        out[d] = v - (lambda - s.pert.iter().sum::<f64>());
    }
    Ok(())
}

/// −(λ_g − λ̃_g) per direction.
fn rate_gap_group<M: JumpModel>(
    model: &M,
    state: &M::State,
    group: usize,
    theta: &[f64],
    perturbed: &[Vec<f64>],
    s: &mut RateScratch,
    out: &mut [f64],
) {
    model.group_rates(state, group, theta, &mut s.base);
    let lambda: f64 = s.base.iter().sum();
    for (d, p) in perturbed.iter().enumerate() {
        model.group_rates(state, group, p, &mut s.pert);
        out[d] = -(lambda - s.pert.iter().sum::<f64>());
    }
}

/// Packed Σ_e c ∇log c ∇log cᵀ over one group.
fn fim_group<M: JumpModel>(
    model: &M,
    state: &M::State,
    group: usize,
    theta: &[f64],
    s: &mut RateScratch,
    out: &mut [f64],
) -> Result<()> {
    model.group_rates(state, group, theta, &mut s.base);
    out.iter_mut().for_each(|v| *v = 0.0);
    for e in 0..s.base.len() {
        let c = s.base[e];
        if c > 0.0 {
            model.log_rate_gradient(state, EventId { group, event: e }, theta, &mut s.grad)?;
            pack_outer(&s.grad, &mut s.packed);
            for (o, g) in out.iter_mut().zip(&s.packed) {
                *o += c * g;
            }
        }
    }
    Ok(())
}

/// Low-variance RER estimator: time average of
/// Σ_σ′ c log(c/c̃) − (λ − λ̃) along the unperturbed path.
pub struct CtmcRerH1 {
    theta: Vec<f64>,
    directions: Vec<Perturbation>,
    perturbed: Vec<Vec<f64>>,
    cache: GroupCache,
    scratch: RateScratch,
    stats: RatioStats,
    nums: Vec<f64>,
}

impl CtmcRerH1 {
    pub fn new<M: JumpModel>(
        model: &M,
        theta: &[f64],
        directions: &[Perturbation],
        options: &EstimatorOptions,
    ) -> Result<Self> {
        let perturbed = perturbed_parameters(theta, directions, |p| model.check_params(p))?;
        let d = directions.len();
        Ok(Self {
            theta: theta.to_vec(),
            directions: directions.to_vec(),
            perturbed,
            cache: GroupCache::new(d),
            scratch: RateScratch::new(model.events_per_group(), model.num_params()),
            stats: RatioStats::new(d, options),
            nums: vec![0.0; d],
        })
    }

    pub fn directions(&self) -> &[Perturbation] {
        &self.directions
    }

    pub fn estimates(&self) -> Result<Vec<Estimate>> {
        self.stats.estimates()
    }

    pub fn traces(&self) -> Vec<ConvergenceTrace> {
        self.stats.traces()
    }

    /// The bracketed integrand at `state`, per direction.
    pub fn integrand<M: JumpModel>(&mut self, model: &M, state: &M::State) -> Result<Vec<f64>> {
        let mut cache = GroupCache::new(self.directions.len());
        let (theta, perturbed, scratch) = (&self.theta, &self.perturbed, &mut self.scratch);
        cache.rebuild(model.num_groups(state), |g, out| {
            h1_group(model, state, g, theta, perturbed, scratch, out)
        })?;
        Ok(cache.totals)
    }
}

impl<M: JumpModel> JumpHook<M> for CtmcRerH1 {
    fn start(&mut self, model: &M, state: &M::State) -> Result<()> {
        let (theta, perturbed, scratch) = (&self.theta, &self.perturbed, &mut self.scratch);
        self.cache.rebuild(model.num_groups(state), |g, out| {
            h1_group(model, state, g, theta, perturbed, scratch, out)
        })
    }

    fn record(&mut self, _model: &M, _state: &M::State, wait: f64, _event: EventId) -> Result<()> {
        for (n, t) in self.nums.iter_mut().zip(&self.cache.totals) {
            *n = wait * t;
        }
        self.stats.push(&self.nums, wait)
    }

    fn after_jump(&mut self, model: &M, state: &M::State, touched: &[usize]) -> Result<()> {
        let (theta, perturbed, scratch) = (&self.theta, &self.perturbed, &mut self.scratch);
        self.cache.update(model.num_groups(state), touched, |g, out| {
            h1_group(model, state, g, theta, perturbed, scratch, out)
        })
    }
}

/// Girsanov RER estimator: realized-jump log-ratios plus the time-weighted
/// total-rate gap, both normalised by the elapsed time T.
pub struct CtmcRerH2 {
    theta: Vec<f64>,
    directions: Vec<Perturbation>,
    perturbed: Vec<Vec<f64>>,
    cache: GroupCache,
    scratch: RateScratch,
    stats: RatioStats,
    nums: Vec<f64>,
}

impl CtmcRerH2 {
    pub fn new<M: JumpModel>(
        model: &M,
        theta: &[f64],
        directions: &[Perturbation],
        options: &EstimatorOptions,
    ) -> Result<Self> {
        let perturbed = perturbed_parameters(theta, directions, |p| model.check_params(p))?;
        let d = directions.len();
        Ok(Self {
            theta: theta.to_vec(),
            directions: directions.to_vec(),
            perturbed,
            cache: GroupCache::new(d),
            scratch: RateScratch::new(model.events_per_group(), model.num_params()),
            stats: RatioStats::new(d, options),
            nums: vec![0.0; d],
        })
    }

    pub fn directions(&self) -> &[Perturbation] {
        &self.directions
    }

    pub fn estimates(&self) -> Result<Vec<Estimate>> {
        self.stats.estimates()
    }

    pub fn traces(&self) -> Vec<ConvergenceTrace> {
        self.stats.traces()
    }
}

impl<M: JumpModel> JumpHook<M> for CtmcRerH2 {
    fn start(&mut self, model: &M, state: &M::State) -> Result<()> {
        let (theta, perturbed, scratch) = (&self.theta, &self.perturbed, &mut self.scratch);
        self.cache.rebuild(model.num_groups(state), |g, out| {
            rate_gap_group(model, state, g, theta, perturbed, scratch, out);
            Ok(())
        })
    }

    fn record(&mut self, model: &M, state: &M::State, wait: f64, event: EventId) -> Result<()> {
        let s = &mut self.scratch;
        model.group_rates(state, event.group, &self.theta, &mut s.base);
        let c = s.base[event.event];
        if !(c > 0.0) {
            return Err(Error::Inconsistent(format!(
                "realized event {} has rate {c}",
                model.describe_event(state, event)
            )));
        }
        for (d, p) in self.perturbed.iter().enumerate() {
            model.group_rates(state, event.group, p, &mut s.pert);
            let ct = s.pert[event.event];
            if !(ct > 0.0) {
                return Err(continuity_error(model, state, event));
            }
            self.nums[d] = (c / ct).ln() + wait * self.cache.totals[d];
        }
        self.stats.push(&self.nums, wait)
    }

    fn after_jump(&mut self, model: &M, state: &M::State, touched: &[usize]) -> Result<()> {
        let (theta, perturbed, scratch) = (&self.theta, &self.perturbed, &mut self.scratch);
        self.cache.update(model.num_groups(state), touched, |g, out| {
            rate_gap_group(model, state, g, theta, perturbed, scratch, out);
            Ok(())
        })
    }
}

/// Low-variance FIM estimator: time average of Σ_σ′ c ∇log c ∇log cᵀ.
pub struct CtmcFimH1 {
    theta: Vec<f64>,
    cache: GroupCache,
    scratch: RateScratch,
    stats: FimStats,
}

impl CtmcFimH1 {
    pub fn new<M: JumpModel>(model: &M, theta: &[f64], options: &EstimatorOptions) -> Result<Self> {
        model.check_params(theta)?;
        let k = model.num_params();
        Ok(Self {
            theta: theta.to_vec(),
            cache: GroupCache::new(k * (k + 1) / 2),
            scratch: RateScratch::new(model.events_per_group(), k),
            stats: FimStats::new(k, options),
        })
    }

    pub fn estimate(&self) -> Result<FimEstimate> {
        self.stats.estimate()
    }

    pub fn trace(&self) -> Option<ConvergenceTrace> {
        self.stats.trace()
    }
}

impl<M: JumpModel> JumpHook<M> for CtmcFimH1 {
    fn start(&mut self, model: &M, state: &M::State) -> Result<()> {
        let (theta, scratch) = (&self.theta, &mut self.scratch);
        self.cache
            .rebuild(model.num_groups(state), |g, out| fim_group(model, state, g, theta, scratch, out))
    }

    fn record(&mut self, _model: &M, _state: &M::State, wait: f64, _event: EventId) -> Result<()> {
        self.stats.push(&self.cache.totals, wait, wait)
    }

    fn after_jump(&mut self, model: &M, state: &M::State, touched: &[usize]) -> Result<()> {
        let (theta, scratch) = (&self.theta, &mut self.scratch);
        self.cache.update(model.num_groups(state), touched, |g, out| {
            fim_group(model, state, g, theta, scratch, out)
        })
    }
}

/// Girsanov FIM estimator: Σ over realized jumps of ∇log c ∇log cᵀ, per
/// unit time.
pub struct CtmcFimH2 {
    theta: Vec<f64>,
    grad: Vec<f64>,
    packed: Vec<f64>,
    stats: FimStats,
}

impl CtmcFimH2 {
    pub fn new<M: JumpModel>(model: &M, theta: &[f64], options: &EstimatorOptions) -> Result<Self> {
        model.check_params(theta)?;
        let k = model.num_params();
        Ok(Self {
            theta: theta.to_vec(),
            grad: vec![0.0; k],
            packed: Vec::with_capacity(k * (k + 1) / 2),
            stats: FimStats::new(k, options),
        })
    }

    pub fn estimate(&self) -> Result<FimEstimate> {
        self.stats.estimate()
    }

    pub fn trace(&self) -> Option<ConvergenceTrace> {
        self.stats.trace()
    }
}

impl<M: JumpModel> JumpHook<M> for CtmcFimH2 {
    fn start(&mut self, _model: &M, _state: &M::State) -> Result<()> {
        Ok(())
    }

    fn record(&mut self, model: &M, state: &M::State, wait: f64, event: EventId) -> Result<()> {
        model.log_rate_gradient(state, event, &self.theta, &mut self.grad)?;
        self.stats.push_outer(&self.grad, 1.0, wait, &mut self.packed)
    }

    fn after_jump(&mut self, _model: &M, _state: &M::State, _touched: &[usize]) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Schlogl, Zgb, ZgbLattice};
    use crate::rng::RngStream;
    use crate::simulate::{replay_jumps, run_ssa, Horizon, SsaConfig};

    fn schlogl_dirs() -> Vec<Perturbation> {
        Perturbation::signed_axes(4, 0.05)
    }

    #[test]
    fn zero_direction_gives_exact_zero() {
        let model = Schlogl::default();
        let theta = Schlogl::DEFAULT_THETA;
        let dirs = vec![Perturbation::zero(4)];
        let opts = EstimatorOptions::default();
        let mut h1 = CtmcRerH1::new(&model, &theta, &dirs, &opts).unwrap();
        let mut h2 = CtmcRerH2::new(&model, &theta, &dirs, &opts).unwrap();
        let config = SsaConfig {
            burn_in: 0.0,
            horizon: Horizon::Transitions(20_000),
            store_trajectory: false,
        };
        let mut rng = RngStream::new(1, 0);
        run_ssa(&model, &theta, 100, &config, &mut rng, &mut [&mut h1, &mut h2])
            .unwrap()
            .into_result()
            .unwrap();
        assert_eq!(h1.estimates().unwrap()[0].estimate, 0.0);
        assert_eq!(h2.estimates().unwrap()[0].estimate, 0.0);
    }

    #[test]
    fn inadmissible_direction_rejected_up_front() {
        let model = Schlogl::default();
        let dirs = vec![Perturbation::axis(4, 1, -2.0).unwrap()];
        let err = CtmcRerH1::new(&model, &Schlogl::DEFAULT_THETA, &dirs, &EstimatorOptions::default());
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn streaming_and_replay_agree_bitwise() {
        let model = Zgb { side: 8 };
        let theta = Zgb::DEFAULT_THETA;
        let dirs = Perturbation::signed_axes(2, 0.02);
        let opts = EstimatorOptions::default();
        let config = SsaConfig {
            burn_in: 1.0,
            horizon: Horizon::Time(20.0),
            store_trajectory: true,
        };
        let mut live = CtmcRerH1::new(&model, &theta, &dirs, &opts).unwrap();
        let mut live_fim = CtmcFimH1::new(&model, &theta, &opts).unwrap();
        let mut rng = RngStream::new(5, 0);
        let run = run_ssa(&model, &theta, ZgbLattice::empty(8).unwrap(), &config, &mut rng, &mut [
            &mut live,
            &mut live_fim,
        ])
        .unwrap();
        let traj = run.trajectory.unwrap();
        let mut again = CtmcRerH1::new(&model, &theta, &dirs, &opts).unwrap();
        let mut again_fim = CtmcFimH1::new(&model, &theta, &opts).unwrap();
        replay_jumps(&model, &traj, &mut [&mut again, &mut again_fim]).unwrap();
        assert_eq!(live.estimates().unwrap(), again.estimates().unwrap());
        assert_eq!(live_fim.estimate().unwrap(), again_fim.estimate().unwrap());
    }

    #[test]
    fn incremental_cache_matches_full_evaluation() {
        let model = Zgb { side: 6 };
        let theta = Zgb::DEFAULT_THETA;
        let dirs = Perturbation::signed_axes(2, 0.02);
        let opts = EstimatorOptions::default();
        let mut hook = CtmcRerH1::new(&model, &theta, &dirs, &opts).unwrap();
        let mut rng = RngStream::new(3, 1);
        let mut state = ZgbLattice::empty(6).unwrap();
        JumpHook::<Zgb>::start(&mut hook, &model, &state).unwrap();
        let mut touched = Vec::new();
        for _ in 0..500 {
            let (event, _) = match crate::simulate::ssa_step(&model, &mut state.clone(), &theta, &mut rng) {
                Ok(v) => v,
                Err(_) => break,
            };
            model.execute(&mut state, event, &mut rng, &mut touched).unwrap();
            JumpHook::<Zgb>::after_jump(&mut hook, &model, &state, &touched).unwrap();
            let full = hook.integrand(&model, &state).unwrap();
            for (a, b) in hook.cache.totals.iter().zip(&full) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zgb_fim_off_diagonal_is_exactly_zero() {
        let model = Zgb { side: 8 };
        let theta = Zgb::DEFAULT_THETA;
        let opts = EstimatorOptions::default();
        let mut h1 = CtmcFimH1::new(&model, &theta, &opts).unwrap();
        let mut h2 = CtmcFimH2::new(&model, &theta, &opts).unwrap();
        let config = SsaConfig {
            burn_in: 0.0,
            horizon: Horizon::Time(10.0),
            store_trajectory: false,
        };
        let mut rng = RngStream::new(2, 0);
        run_ssa(&model, &theta, ZgbLattice::empty(8).unwrap(), &config, &mut rng, &mut [&mut h1, &mut h2]).unwrap();
        for f in [h1.estimate().unwrap().matrix, h2.estimate().unwrap().matrix] {
            assert_eq!(f[(0, 1)], 0.0);
            assert_eq!(f[(1, 0)], 0.0);
            assert!(f[(0, 0)] > 0.0 && f[(1, 1)] > 0.0);
        }
    }

    /// A single state with a self-loop event, so the path never moves.
    struct Frozen;

    impl JumpModel for Frozen {
        type State = ();

        fn num_params(&self) -> usize {
            2
        }

        fn param_names(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }

        fn check_params(&self, theta: &[f64]) -> Result<()> {
            if theta.iter().all(|t| *t > 0.0) {
                Ok(())
            } else {
                Err(Error::InvalidParameter("positive".into()))
            }
        }

        fn num_groups(&self, _: &()) -> usize {
            1
        }

        fn events_per_group(&self) -> usize {
            2
        }

        fn group_rates(&self, _: &(), _: usize, theta: &[f64], rates: &mut [f64]) {
            rates[0] = theta[0];
            rates[1] = theta[0] * theta[1];
        }

        fn log_rate_gradient(&self, _: &(), id: EventId, theta: &[f64], grad: &mut [f64]) -> Result<()> {
            grad[0] = 1.0 / theta[0];
            grad[1] = if id.event == 1 { 1.0 / theta[1] } else { 0.0 };
            Ok(())
        }

        fn execute(&self, _: &mut (), _: EventId, _: &mut RngStream, touched: &mut Vec<usize>) -> Result<()> {
            touched.clear();
            touched.push(0);
            Ok(())
        }

        fn state_digest(&self, _: &()) -> String {
            "frozen".into()
        }
    }

    #[test]
    fn frozen_state_returns_the_integrand() {
        let theta = [2.0, 0.5];
        let eps = Perturbation::new(vec![0.3, -0.1]).unwrap();
        let opts = EstimatorOptions::default();
        let mut rer = CtmcRerH1::new(&Frozen, &theta, std::slice::from_ref(&eps), &opts).unwrap();
        let mut fim = CtmcFimH1::new(&Frozen, &theta, &opts).unwrap();
        let config = SsaConfig {
            burn_in: 0.0,
            horizon: Horizon::Time(50.0),
            store_trajectory: false,
        };
        let mut rng = RngStream::new(0, 0);
        run_ssa(&Frozen, &theta, (), &config, &mut rng, &mut [&mut rer, &mut fim]).unwrap();
        let (c1, c2) = (2.0_f64, 1.0_f64);
        let (t1, t2) = (2.3, 2.3 * 0.4);
        let expected = c1 * (c1 / t1).ln() + c2 * (c2 / t2).ln() - (c1 + c2 - t1 - t2);
        let got = rer.estimates().unwrap()[0].estimate;
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        let f = fim.estimate().unwrap().matrix;
        // c1 (1/2,0)(1/2,0)ᵀ + c2 (1/2,2)(1/2,2)ᵀ with c1 = 2, c2 = 1
        let exp = [[0.75, 1.0], [1.0, 4.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((f[(i, j)] - exp[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn h2_trace_and_errors_are_reported() {
        let model = Schlogl::default();
        let theta = Schlogl::DEFAULT_THETA;
        let opts = EstimatorOptions {
            batches: 16,
            trace_per_decade: Some(4),
        };
        let mut h2 = CtmcRerH2::new(&model, &theta, &schlogl_dirs(), &opts).unwrap();
        let config = SsaConfig {
            burn_in: 1.0,
            horizon: Horizon::Transitions(50_000),
            store_trajectory: false,
        };
        let mut rng = RngStream::new(4, 0);
        run_ssa(&model, &theta, 100, &config, &mut rng, &mut [&mut h2]).unwrap();
        let est = h2.estimates().unwrap();
        assert_eq!(est.len(), 8);
        assert!(est.iter().all(|e| e.std_error.is_some() && e.samples == 50_000));
        let traces = h2.traces();
        assert_eq!(traces.len(), 8);
        assert!(traces[0].points.len() >= 15);
    }
}
