//! Gillespie's direct method.

use std::io::Write;

use crate::error::{Error, Result};
use crate::models::{positive_events, JumpModel};
use crate::rng::RngStream;
use crate::simulate::Horizon;
use crate::trajectory::{EventId, JumpTrajectory};

/// Receives the recorded transitions of a jump process.
///
/// For each transition the driver calls [`record`](JumpHook::record) with
/// the state before the jump, then executes the jump and calls
/// [`after_jump`](JumpHook::after_jump) with the new state and the groups
/// whose rates changed.
pub trait JumpHook<M: JumpModel> {
    fn start(&mut self, model: &M, state: &M::State) -> Result<()>;

    fn record(&mut self, model: &M, state: &M::State, wait: f64, event: EventId) -> Result<()>;

    fn after_jump(&mut self, model: &M, state: &M::State, touched: &[usize]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsaConfig {
    /// Transitions starting before this time are discarded.
    pub burn_in: f64,
    pub horizon: Horizon,
    /// Keep a [`JumpTrajectory`] of the recorded transitions.
    pub store_trajectory: bool,
}

#[derive(Debug, Clone)]
pub struct JumpRun<S> {
    pub final_state: S,
    /// Simulated time at the end of the run, burn-in included.
    pub end_time: f64,
    /// Sum of recorded waiting times.
    pub recorded_time: f64,
    pub recorded_jumps: u64,
    pub trajectory: Option<JumpTrajectory<S>>,
    /// Set when the run stopped early; estimates cover only the recorded part.
    pub failure: Option<Error>,
}

impl<S> JumpRun<S> {
    pub fn is_partial(&self) -> bool {
        self.failure.is_some()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// One SSA step computed from scratch: returns the event and waiting time
/// and applies the event to `state`.
///
/// Draw order: one uniform for the waiting time, one for the event.
pub fn ssa_step<M: JumpModel>(
    model: &M,
    state: &mut M::State,
    theta: &[f64],
    rng: &mut RngStream,
) -> Result<(EventId, f64)> {
    let events = positive_events(model, state, theta);
    let lambda: f64 = events.iter().map(|(_, c)| c).sum();
    if !(lambda > 0.0) {
        return Err(Error::AbsorbingState {
            state: model.state_digest(state),
        });
    }
    let wait = rng.exponential(lambda);
    let threshold = rng.uniform() * lambda;
    let mut cum = 0.0;
    let mut chosen = events[events.len() - 1].0;
    for &(id, c) in &events {
        cum += c;
        if cum > threshold {
            chosen = id;
            break;
        }
    }
    let mut touched = Vec::new();
    model.execute(state, chosen, rng, &mut touched)?;
    Ok((chosen, wait))
}

/// Per-group rates under θ kept in sync with the state.
struct RateTable {
    per_group: usize,
    rates: Vec<f64>,
    totals: Vec<f64>,
}

impl RateTable {
    fn new<M: JumpModel>(model: &M, state: &M::State, theta: &[f64]) -> Self {
        let per_group = model.events_per_group();
        let groups = model.num_groups(state);
        let mut table = Self {
            per_group,
            rates: vec![0.0; groups * per_group],
            totals: vec![0.0; groups],
        };
        for g in 0..groups {
            table.refresh(model, state, theta, g);
        }
        table
    }

    fn refresh<M: JumpModel>(&mut self, model: &M, state: &M::State, theta: &[f64], group: usize) {
        let slot = &mut self.rates[group * self.per_group..(group + 1) * self.per_group];
        model.group_rates(state, group, theta, slot);
        self.totals[group] = slot.iter().sum();
    }

    fn total(&self) -> f64 {
        self.totals.iter().sum()
    }

    /// First event whose cumulative rate exceeds `threshold`.
    fn select(&self, threshold: f64) -> EventId {
        let mut cum = 0.0;
        let mut last = None;
        for (g, &tot) in self.totals.iter().enumerate() {
            if tot <= 0.0 {
                continue;
            }
            if cum + tot > threshold {
                let slot = &self.rates[g * self.per_group..(g + 1) * self.per_group];
                for (e, &c) in slot.iter().enumerate() {
                    if c <= 0.0 {
                        continue;
                    }
                    cum += c;
                    last = Some(EventId { group: g, event: e });
                    if cum > threshold {
                        return EventId { group: g, event: e };
                    }
                }
            } else {
                cum += tot;
                let slot = &self.rates[g * self.per_group..(g + 1) * self.per_group];
                if let Some(e) = slot.iter().rposition(|&c| c > 0.0) {
                    last = Some(EventId { group: g, event: e });
                }
            }
        }
        // rounding left the threshold just above the cumulative sum
        last.expect("positive total rate implies a positive event")
    }
}

/// Runs the SSA from `initial` under θ, streaming recorded transitions to
/// `hooks`.
pub fn run_ssa<M: JumpModel>(
    model: &M,
    theta: &[f64],
    initial: M::State,
    config: &SsaConfig,
    rng: &mut RngStream,
    hooks: &mut [&mut dyn JumpHook<M>],
) -> Result<JumpRun<M::State>> {
    model.check_params(theta)?;
    match config.horizon {
        Horizon::Time(t) if !(t > config.burn_in) => {
            return Err(Error::InvalidConfig(format!(
                "horizon {t} must exceed burn-in {}",
                config.burn_in
            )))
        }
        Horizon::Transitions(0) => {
            return Err(Error::InvalidConfig("transition horizon must be positive".into()))
        }
        _ => {}
    }

    let mut state = initial;
    let mut table = RateTable::new(model, &state, theta);
    let mut touched = Vec::new();
    let mut time = 0.0;
    let mut started = false;
    let mut recorded_jumps = 0u64;
    let mut recorded_time = 0.0;
    let mut trajectory = config.store_trajectory.then(JumpTrajectory::new);
    let mut failure = None;

    loop {
        let done = match config.horizon {
            Horizon::Time(t) => time >= t,
            Horizon::Transitions(n) => recorded_jumps >= n,
        };
        if done {
            break;
        }
        let lambda = table.total();
        if !(lambda > 0.0) {
            failure = Some(Error::AbsorbingState {
                state: model.state_digest(&state),
            });
            break;
        }
        let wait = rng.exponential(lambda);
        let event = table.select(rng.uniform() * lambda);
        let recording = time >= config.burn_in;
        if recording {
            if !started {
                started = true;
                if let Err(e) = hooks.iter_mut().try_for_each(|h| h.start(model, &state)) {
                    failure = Some(Error::Hook(e.to_string()));
                    break;
                }
            }
            if let Err(e) = hooks
                .iter_mut()
                .try_for_each(|h| h.record(model, &state, wait, event))
            {
                failure = Some(hook_error(e));
                break;
            }
        }
        let before = trajectory.as_ref().map(|_| state.clone());
        if let Err(e) = model.execute(&mut state, event, rng, &mut touched) {
            failure = Some(e);
            break;
        }
        for &g in &touched {
            table.refresh(model, &state, theta, g);
        }
        time += wait;
        if recording {
            recorded_jumps += 1;
            recorded_time += wait;
            if let (Some(traj), Some(before)) = (trajectory.as_mut(), before) {
                traj.push(before, wait, event, touched.clone())?;
            }
            if let Err(e) = hooks
                .iter_mut()
                .try_for_each(|h| h.after_jump(model, &state, &touched))
            {
                failure = Some(hook_error(e));
                break;
            }
        }
    }
    if let Some(traj) = trajectory.as_mut() {
        traj.set_final_state(state.clone());
    }
    Ok(JumpRun {
        final_state: state,
        end_time: time,
        recorded_time,
        recorded_jumps,
        trajectory,
        failure,
    })
}

fn hook_error(e: Error) -> Error {
    // numerical errors keep their identity so callers can classify them
    if e.is_numerical() {
        e
    } else {
        Error::Hook(e.to_string())
    }
}

/// Feeds a stored trajectory to hooks exactly as the live driver would.
pub fn replay_jumps<M: JumpModel>(
    model: &M,
    trajectory: &JumpTrajectory<M::State>,
    hooks: &mut [&mut dyn JumpHook<M>],
) -> Result<()> {
    let Some(first) = trajectory.states().first() else {
        return Err(Error::NoData);
    };
    for h in hooks.iter_mut() {
        h.start(model, first)?;
    }
    for i in 0..trajectory.len() {
        let state = &trajectory.states()[i];
        for h in hooks.iter_mut() {
            h.record(model, state, trajectory.waits()[i], trajectory.events()[i])?;
        }
        let next = trajectory
            .next_state(i)
            .ok_or_else(|| Error::Inconsistent("trajectory lacks its final state".into()))?;
        for h in hooks.iter_mut() {
            h.after_jump(model, next, &trajectory.touched()[i])?;
        }
    }
    Ok(())
}

/// Writes `time,state,event` per recorded transition; `time` is the jump
/// time and `event` is `group:event`.
pub struct CsvDumpHook<W: Write> {
    out: W,
    time: f64,
}

impl<W: Write> CsvDumpHook<W> {
    pub fn new(mut out: W, start_time: f64) -> Result<Self> {
        writeln!(out, "time,state,event").map_err(|e| Error::Hook(e.to_string()))?;
        Ok(Self {
            out,
            time: start_time,
        })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<M: JumpModel, W: Write> JumpHook<M> for CsvDumpHook<W> {
    fn start(&mut self, _model: &M, _state: &M::State) -> Result<()> {
        Ok(())
    }

    fn record(&mut self, model: &M, state: &M::State, wait: f64, event: EventId) -> Result<()> {
        self.time += wait;
        writeln!(
            self.out,
            "{},{},{}:{}",
            self.time,
            model.state_digest(state),
            event.group,
            event.event
        )
        .map_err(|e| Error::Hook(e.to_string()))
    }

    fn after_jump(&mut self, _model: &M, _state: &M::State, _touched: &[usize]) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Schlogl;

    /// Two-state chain 0 ⇄ 1 with rates a (0→1) and b (1→0).
    struct TwoState;

    impl JumpModel for TwoState {
        type State = u8;
        fn num_params(&self) -> usize {
            2
        }
        fn param_names(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }
        fn check_params(&self, theta: &[f64]) -> Result<()> {
            if theta.iter().all(|&v| v > 0.0) {
                Ok(())
            } else {
                Err(Error::InvalidParameter("rates must be positive".into()))
            }
        }
        fn num_groups(&self, _: &u8) -> usize {
            1
        }
        fn events_per_group(&self) -> usize {
            1
        }
        fn group_rates(&self, s: &u8, _: usize, theta: &[f64], rates: &mut [f64]) {
            rates[0] = theta[*s as usize];
        }
        fn log_rate_gradient(&self, s: &u8, _: EventId, theta: &[f64], grad: &mut [f64]) -> Result<()> {
            grad.fill(0.0);
            grad[*s as usize] = 1.0 / theta[*s as usize];
            Ok(())
        }
        fn execute(&self, s: &mut u8, _: EventId, _: &mut RngStream, touched: &mut Vec<usize>) -> Result<()> {
            *s = 1 - *s;
            touched.clear();
            touched.push(0);
            Ok(())
        }
        fn state_digest(&self, s: &u8) -> String {
            s.to_string()
        }
    }

    struct Occupancy {
        time_in_one: f64,
        total: f64,
        events: Vec<EventId>,
    }

    impl JumpHook<TwoState> for Occupancy {
        fn start(&mut self, _: &TwoState, _: &u8) -> Result<()> {
            Ok(())
        }
        fn record(&mut self, _: &TwoState, s: &u8, wait: f64, ev: EventId) -> Result<()> {
            if *s == 1 {
                self.time_in_one += wait;
            }
            self.total += wait;
            self.events.push(ev);
            Ok(())
        }
        fn after_jump(&mut self, _: &TwoState, _: &u8, _: &[usize]) -> Result<()> {
            Ok(())
        }
    }

    #[test]
    fn two_state_occupancy() {
        let (a, b) = (2.0, 0.5);
        let mut hook = Occupancy {
            time_in_one: 0.0,
            total: 0.0,
            events: vec![],
        };
        let cfg = SsaConfig {
            burn_in: 0.0,
            horizon: Horizon::Transitions(1_000_000),
            store_trajectory: false,
        };
        let mut rng = RngStream::new(42, 0);
        run_ssa(&TwoState, &[a, b], 0, &cfg, &mut rng, &mut [&mut hook])
            .unwrap()
            .into_result()
            .unwrap();
        // stationary P(state 1) = a/(a+b); cycle-level error ~ 1/sqrt(n/2)
        let expected = a / (a + b);
        let frac = hook.time_in_one / hook.total;
        let cycles = 500_000.0;
        // per-cycle variance of occupancy ratio (sum of two exponentials)
        let se = (((1.0 - expected).powi(2) / (b * b) + expected.powi(2) / (a * a)) / cycles).sqrt()
            / (1.0 / a + 1.0 / b);
        assert!((frac - expected).abs() < 3.0 * se, "frac {frac} expected {expected} se {se}");
    }

    #[test]
    fn schlogl_zero_only_births() {
        let m = Schlogl::default();
        let mut rng = RngStream::new(1, 0);
        for _ in 0..20 {
            let mut x = 0u64;
            let (ev, dt) = ssa_step(&m, &mut x, &Schlogl::DEFAULT_THETA, &mut rng).unwrap();
            assert_eq!(x, 1);
            assert_eq!(ev.event, crate::models::schlogl::BIRTH);
            assert!(dt > 0.0);
        }
    }

    #[test]
    fn absorbing_state_is_reported() {
        let mut rng = RngStream::new(1, 0);
        let mut s = 0u8;
        let err = ssa_step(&TwoState, &mut s, &[0.0, 1.0], &mut rng).unwrap_err();
        assert!(matches!(err, Error::AbsorbingState { .. }));
    }

    #[test]
    fn event_frequencies_match_rates() {
        // Schlögl frozen at x=10: birth probability (c1+c3)/λ
        let m = Schlogl::default();
        let theta = Schlogl::DEFAULT_THETA;
        let birth = m.birth_rate(10, &theta);
        let death = m.death_rate(10, &theta);
        let p = birth / (birth + death);
        let mut rng = RngStream::new(2, 0);
        let n = 100_000;
        let mut births = 0;
        for _ in 0..n {
            let mut x = 10u64;
            let (ev, _) = ssa_step(&m, &mut x, &theta, &mut rng).unwrap();
            births += (ev.event == crate::models::schlogl::BIRTH) as u32;
        }
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((births as f64 / n as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn hooks_are_passive() {
        let cfg = SsaConfig {
            burn_in: 0.0,
            horizon: Horizon::Transitions(1000),
            store_trajectory: true,
        };
        let m = Schlogl::default();
        let th = Schlogl::DEFAULT_THETA;
        let bare = run_ssa(&m, &th, 100, &cfg, &mut RngStream::new(5, 1), &mut []).unwrap();
        let mut dump = CsvDumpHook::new(Vec::new(), 0.0).unwrap();
        let hooked = run_ssa(&m, &th, 100, &cfg, &mut RngStream::new(5, 1), &mut [&mut dump]).unwrap();
        assert_eq!(bare.trajectory, hooked.trajectory);
        let text = String::from_utf8(dump.into_inner()).unwrap();
        assert_eq!(text.lines().count(), 1001);
        assert!(text.starts_with("time,state,event\n"));
    }

    #[test]
    fn burn_in_discards_early_transitions() {
        let cfg = SsaConfig {
            burn_in: 5.0,
            horizon: Horizon::Time(20.0),
            store_trajectory: true,
        };
        let m = Schlogl::default();
        let run = run_ssa(&m, &Schlogl::DEFAULT_THETA, 100, &cfg, &mut RngStream::new(1, 0), &mut []).unwrap();
        let traj = run.trajectory.unwrap();
        assert!(run.end_time >= 20.0);
        assert!((run.end_time - run.recorded_time) >= 5.0);
        assert!((traj.total_time() - run.recorded_time).abs() < 1e-9);
    }

    #[test]
    fn horizon_must_exceed_burn_in() {
        let cfg = SsaConfig {
            burn_in: 5.0,
            horizon: Horizon::Time(5.0),
            store_trajectory: false,
        };
        let err = run_ssa(&Schlogl::default(), &Schlogl::DEFAULT_THETA, 0, &cfg, &mut RngStream::new(1, 0), &mut [])
            .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }
}
