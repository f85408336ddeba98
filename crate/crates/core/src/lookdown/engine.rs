use super::dynamics::{Dynamics, Resolution, TwoType};
use super::noise::BrownianNoise;
use super::ops::apply_resolution;
use super::{LookdownState, RunConfig};
use crate::error::{invalid, Error, Result};
use crate::events::{Atom, EventGenerator, EventSource, EventStream, NeutralAtom, PotentialAtom};

/// A point at which a run is sampled: lookdown time `s` or original time `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    S(f64),
    T(f64),
}

/// An event that changed the state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AppliedEvent {
    Neutral(NeutralAtom),
    Potential { atom: PotentialAtom, resolution: Resolution },
}

/// Hooks called while a run advances.
pub trait Observer {
    fn on_start(&mut self, _state: &LookdownState) {}
    /// After a continuous step of lookdown length `h`.
    fn on_step(&mut self, _h: f64, _state: &LookdownState) {}
    /// After an event changed the state.
    fn on_event(&mut self, _event: &AppliedEvent, _state: &LookdownState) {}
}

pub struct NullObserver;

impl Observer for NullObserver {}

/// States recorded at the requested targets, plus the final state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<LookdownState>,
    pub final_state: LookdownState,
}

const T_TOL: f64 = 1e-12;
const MAX_T_ITER: usize = 100;

/// Drives one state forward: exponential-Euler steps of the log mass between
/// grid points and candidate events, events applied at their left limits.
pub struct Engine<'d, D: Dynamics + ?Sized> {
    dynamics: &'d D,
    m: f64,
    noise_scale: f64,
    bounds: Vec<(crate::events::Mark, f64)>,
    noise: BrownianNoise,
}

impl<'d, D: Dynamics + ?Sized> Engine<'d, D> {
    /// Noise on the grid `dt_s`, seeded from `seed`, started at `s0`.
    pub fn new(dynamics: &'d D, m: f64, dt_s: f64, noise_scale: f64, seed: u64, s0: f64) -> Self {
        let bounds = dynamics.marks().into_iter().map(|mk| (mk, dynamics.threshold_bound(mk, m))).collect();
        Self { dynamics, m, noise_scale, bounds, noise: BrownianNoise::new(seed, dt_s, s0) }
    }

    pub fn from_config(cfg: &RunConfig, dynamics: &'d D, s0: f64) -> Self {
        Self::new(dynamics, cfg.m, cfg.dt_s, cfg.noise, cfg.seed, s0)
    }

    fn can_activate(&self, a: &PotentialAtom) -> bool {
        self.bounds.iter().any(|&(mk, bound)| mk == a.mark && a.z <= bound)
    }

    /// Time of the next atom that may change the state, dropping atoms that
    /// can never be active.
    fn next_relevant<E: EventSource>(&self, events: &mut E) -> Option<f64> {
        loop {
            match events.peek()? {
                Atom::Potential(p) if !self.can_activate(p) => {
                    events.pop();
                }
                a => return Some(a.time()),
            }
        }
    }

    /// Continuous step from `state.s` to `s_end` (a time at or before the next
    /// known noise point).
    fn step_to<O: Observer>(&mut self, state: &mut LookdownState, s_end: f64, obs: &mut O) {
        let h = s_end - state.s;
        if h <= 0.0 {
            return;
        }
        let (zeta, t) = self.trial(state, s_end);
        self.noise.commit(s_end);
        state.s = s_end;
        state.zeta = zeta;
        state.t_accum = t;
        if let Some(g) = state.genealogy.as_mut() {
            g.set_clock(t);
        }
        state.check_band(self.m);
        obs.on_step(h, state);
    }

    /// Mass and original time the state would have at `s_end`.
    fn trial(&mut self, state: &LookdownState, s_end: f64) -> (f64, f64) {
        let h = s_end - state.s;
        let dw = self.noise.value_at(s_end) - self.noise.value();
        let f = self.dynamics.growth_rate(state.zeta, &state.types);
        let sig = self.noise_scale;
        let zeta = state.zeta * ((f - 0.5 * sig * sig) * h + sig * dw).exp();
        (zeta, state.t_accum + 0.5 * (state.zeta + zeta) * h)
    }

    fn apply_event<E: EventSource, O: Observer>(
        &mut self,
        state: &mut LookdownState,
        events: &mut E,
        obs: &mut O,
    ) -> Result<()> {
        let atom = events.pop().expect("peeked");
        match atom {
            Atom::Neutral(a) => {
                if a.dst >= state.n() {
                    return Err(invalid(format!("event stream has more levels than the state ({})", state.n())));
                }
                state.types.arrow(a.src, a.dst);
                if let Some(g) = state.genealogy.as_mut() {
                    g.apply_arrow(a.src, a.dst);
                }
                obs.on_event(&AppliedEvent::Neutral(a), state);
            }
            Atom::Potential(a) => {
                if a.level >= state.n() {
                    return Err(invalid(format!("event stream has more levels than the state ({})", state.n())));
                }
                let res = self.dynamics.resolve(&a, state.zeta, &state.types);
                if res != Resolution::Reject {
                    apply_resolution(state, a.level, res);
                    obs.on_event(&AppliedEvent::Potential { atom: a, resolution: res }, state);
                }
            }
        }
        Ok(())
    }

    /// Runs until `target`, the first exit of the mass from `(1/M, M)`, or
    /// the end of the events, whichever comes first. Reaching the end of the
    /// events before the target is an error.
    pub fn advance<E: EventSource, O: Observer>(
        &mut self,
        state: &mut LookdownState,
        events: &mut E,
        target: Target,
        obs: &mut O,
    ) -> Result<()> {
        if let Target::S(s) = target {
            if s < state.s {
                return Err(invalid(format!("target s = {s} lies before the state (s = {})", state.s)));
            }
        }
        let horizon = events.horizon();
        while !state.is_stopped() {
            let reached = match target {
                Target::S(s) => state.s >= s,
                Target::T(t) => t - state.t_accum <= T_TOL * t.max(1.0),
            };
            if reached {
                return Ok(());
            }
            if state.s >= horizon {
                return Err(Error::OutOfRange(format!(
                    "event horizon {horizon} reached before the target {target:?}"
                )));
            }
            let next_ev = self.next_relevant(events);
            let grid = self.noise.next_known();
            let mut s_end = grid.min(horizon);
            if let Some(te) = next_ev {
                s_end = s_end.min(te);
            }
            match target {
                Target::S(s) => {
                    s_end = s_end.min(s);
                    self.step_to(state, s_end, obs);
                }
                Target::T(t) => {
                    let (_, t_end) = self.trial(state, s_end);
                    if t_end > t {
                        s_end = self.solve_t(state, s_end, t);
                    }
                    self.step_to(state, s_end, obs);
                    if state.s >= s_end && t - state.t_accum <= T_TOL * t.max(1.0) {
                        continue;
                    }
                }
            }
            if state.is_stopped() {
                break;
            }
            if next_ev == Some(state.s) {
                self.apply_event(state, events, obs)?;
            }
        }
        Ok(())
    }

    /// Lookdown time in `(state.s, hi]` at which the original clock reaches
    /// `t`, by secant iteration on trial steps.
    fn solve_t(&mut self, state: &LookdownState, hi: f64, t: f64) -> f64 {
        let need = t - state.t_accum;
        let (mut lo_h, mut lo_t) = (0.0, 0.0);
        let (mut hi_h, mut hi_t) = (hi - state.s, self.trial(state, hi).1 - state.t_accum);
        let mut h = need / state.zeta;
        for _ in 0..MAX_T_ITER {
            if !(h > lo_h && h < hi_h) {
                h = lo_h + (need - lo_t) / (hi_t - lo_t) * (hi_h - lo_h);
            }
            let got = self.trial(state, state.s + h).1 - state.t_accum;
            if (got - need).abs() <= T_TOL * t.max(1.0) {
                return state.s + h;
            }
            if got < need {
                (lo_h, lo_t) = (h, got);
            } else {
                (hi_h, hi_t) = (h, got);
            }
            h = lo_h + (need - lo_t) / (hi_t - lo_t) * (hi_h - lo_h);
        }
        state.s + h
    }
}

/// Runs `state` through `targets` in order, recording a snapshot at each.
/// The final state is the one at the last target, or at the run horizon when
/// no target is given.
pub fn advance_with<D, E, O>(
    state: LookdownState,
    cfg: &RunConfig,
    dynamics: &D,
    events: &mut E,
    targets: &[Target],
    obs: &mut O,
) -> Result<Trajectory>
where
    D: Dynamics + ?Sized,
    E: EventSource,
    O: Observer,
{
    cfg.validate()?;
    if events.horizon() < cfg.horizon_s {
        return Err(invalid(format!(
            "event horizon {} is shorter than the run horizon {}",
            events.horizon(),
            cfg.horizon_s
        )));
    }
    let mut state = state;
    let mut engine = Engine::from_config(cfg, dynamics, state.s);
    obs.on_start(&state);
    let mut snapshots = Vec::with_capacity(targets.len());
    for &target in targets {
        engine.advance(&mut state, events, target, obs)?;
        snapshots.push(state.clone());
    }
    if targets.is_empty() {
        engine.advance(&mut state, events, Target::S(cfg.horizon_s), obs)?;
    }
    Ok(Trajectory { snapshots, final_state: state })
}

/// Two-type run of `state` against a materialized stream up to the run
/// horizon, sampled at the lookdown times `outputs`.
pub fn advance(state: LookdownState, cfg: &RunConfig, events: &EventStream, outputs: &[f64]) -> Result<Trajectory> {
    let mut targets: Vec<Target> = outputs.iter().map(|&s| Target::S(s)).collect();
    targets.push(Target::S(cfg.horizon_s));
    advance_with(state, cfg, &TwoType::new(cfg.b, cfg.c), &mut events.cursor(), &targets, &mut NullObserver)
}

/// A complete run from the configured initial state with lazily generated
/// events.
pub fn run_replica<D, O>(cfg: &RunConfig, dynamics: &D, labels: &[String], targets: &[Target], obs: &mut O) -> Result<Trajectory>
where
    D: Dynamics + ?Sized,
    O: Observer,
{
    let state = LookdownState::initial(cfg, labels)?;
    if state.types.n_types() != dynamics.n_types() {
        return Err(invalid("type labels do not match the dynamics"));
    }
    // Atoms above the threshold bounds are never active, so they are not
    // generated at all.
    let bounds: Vec<_> = dynamics.marks().into_iter().map(|mk| (mk, dynamics.threshold_bound(mk, cfg.m))).collect();
    let mut events = EventGenerator::restricted(cfg.n_levels, cfg.horizon_s, dynamics.cap(cfg.m), &bounds, cfg.seed)?;
    advance_with(state, cfg, dynamics, &mut events, targets, obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{gen_neutral_events, Mark};
    use crate::genealogy::check_ultrametric;
    use crate::lookdown::{two_type_labels, InitialTypes, StopStatus, A, B};

    fn frozen(n: usize, horizon: f64) -> RunConfig {
        let mut cfg = RunConfig::new(n, 0.0, 0.0, 10.0, horizon, 1);
        cfg.noise = 0.0;
        cfg
    }

    #[test]
    fn frozen_dynamics_grow_distances_linearly() {
        let cfg = frozen(3, 1.0);
        let st = LookdownState::initial_two_type(&cfg).unwrap();
        let g0 = st.types.clone();
        let tr = advance(st, &cfg, &EventStream::empty(3, 1.0), &[0.25]).unwrap();
        let fs = &tr.final_state;
        assert_eq!(fs.zeta, 1.0);
        assert!((fs.distance(0, 2).unwrap() - 2.0).abs() < 1e-12);
        assert!((tr.snapshots[0].distance(0, 1).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(tr.snapshots.len(), 2);
        assert_eq!(fs.types, g0);
        assert!((fs.t_accum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_arrow_resets_distance() {
        let cfg = frozen(2, 0.5);
        let mut st = LookdownState::initial_two_type(&cfg).unwrap();
        st.types = crate::lookdown::TypeConfig::new(vec![A, B], 2).unwrap();
        let ev = EventStream {
            atoms: vec![Atom::Neutral(NeutralAtom { time_s: 0.3, src: 0, dst: 1 })],
            horizon: 0.5,
            n_levels: 2,
            cap: 0.0,
            marks: vec![],
        };
        let tr = advance(st, &cfg, &ev, &[]).unwrap();
        assert!((tr.final_state.distance(0, 1).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(tr.final_state.types.types(), &[A, A]);
    }

    #[test]
    fn short_stream_is_rejected() {
        let cfg = frozen(2, 1.0);
        let st = LookdownState::initial_two_type(&cfg).unwrap();
        assert!(advance(st, &cfg, &EventStream::empty(2, 0.5), &[]).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let mut cfg = RunConfig::new(16, 1.0, 1.0, 10.0, 0.5, 42);
        cfg.initial_types = InitialTypes::iid_two_type(0.5);
        let dy = TwoType::new(1.0, 1.0);
        let labels = two_type_labels();
        let a = run_replica(&cfg, &dy, &labels, &[Target::S(0.2)], &mut NullObserver).unwrap();
        let b = run_replica(&cfg, &dy, &labels, &[Target::S(0.2)], &mut NullObserver).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stops_on_band_exit() {
        let mut cfg = RunConfig::new(4, 0.0, 0.0, 1.5, 50.0, 3);
        cfg.noise = 1.0;
        let dy = TwoType::new(0.0, 0.0);
        let tr = run_replica(&cfg, &dy, &two_type_labels(), &[], &mut NullObserver).unwrap();
        let fs = tr.final_state;
        assert_ne!(fs.stop, StopStatus::None);
        assert!(fs.zeta <= 1.0 / 1.5 || fs.zeta >= 1.5);
        assert!(fs.s < 50.0);
    }

    #[test]
    fn time_target_is_hit() {
        let cfg = RunConfig::new(8, 1.0, 0.5, 10.0, 20.0, 9);
        let dy = TwoType::new(1.0, 0.5);
        let tr = run_replica(&cfg, &dy, &two_type_labels(), &[Target::T(0.7), Target::T(1.3)], &mut NullObserver)
            .unwrap();
        for (snap, t) in tr.snapshots.iter().zip([0.7, 1.3]) {
            if snap.stop == StopStatus::None {
                assert!((snap.t_accum - t).abs() < 1e-11, "{} vs {t}", snap.t_accum);
            }
        }
    }

    struct Checker {
        events: usize,
        failures: usize,
    }

    impl Observer for Checker {
        fn on_event(&mut self, _e: &AppliedEvent, st: &LookdownState) {
            self.events += 1;
            let d = st.distances().unwrap();
            if !check_ultrametric(&d, 1e-9 * d.max_entry()).unwrap().pass {
                self.failures += 1;
            }
        }
    }

    #[test]
    fn events_keep_distances_ultrametric() {
        let cfg = RunConfig::new(12, 1.0, 1.0, 10.0, 0.5, 5);
        let dy = TwoType::new(1.0, 1.0);
        let mut ch = Checker { events: 0, failures: 0 };
        run_replica(&cfg, &dy, &two_type_labels(), &[], &mut ch).unwrap();
        assert!(ch.events > 10);
        assert_eq!(ch.failures, 0);
    }

    #[test]
    fn neutral_runs_ignore_potential_marks() {
        let cfg = frozen(5, 1.0);
        let ev = gen_neutral_events(5, 1.0, 2).unwrap();
        let st = LookdownState::initial_two_type(&cfg).unwrap();
        let tr = advance(st.clone(), &cfg, &ev, &[]).unwrap();
        let mut manual = st;
        for a in ev.neutral() {
            manual.types.arrow(a.src, a.dst);
        }
        assert_eq!(tr.final_state.types, manual.types);
        let _ = Mark::Beta;
    }
}
