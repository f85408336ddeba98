//! Generator of the lookdown process on product-form test functions, and
//! Monte Carlo checks that `F(X_s) - int AF(X_u) du` has constant mean along
//! simulated runs.

mod function;
mod generator;

pub use function::{
    smoothstep, BumpWindow, Derivatives, DistanceFactor, MarkedView, MassFactor, Term, TestFunction, TypeFactor,
};
pub use generator::{eval_generator, Distances, Generator, Levels};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::ensemble::try_map_replicas;
use crate::error::{invalid, Result};
use crate::events::EventGenerator;
use crate::lookdown::{
    two_type_labels, AppliedEvent, Dynamics, Engine, LookdownState, NullObserver, Observer, RunConfig, Target, TwoType,
};
use crate::seed::{stream_rng, StreamKind};
use crate::stats::RunningStats;
use generator::View;

/// Summary of `F(X_{s+delta}) - F(X_s) - int_s^{s+delta} AF(X_u) du` over
/// replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub function_id: String,
    pub delta: f64,
    pub replicas: usize,
    pub mean: f64,
    pub se: f64,
    /// `|mean| <= 3 se`.
    pub pass: bool,
}

impl ResidualReport {
    fn from_samples(function_id: &str, delta: f64, xs: &[f64]) -> Self {
        let st: RunningStats = xs.iter().copied().collect();
        let (mean, se) = (st.mean(), st.se());
        let pass = mean.abs() <= 3.0 * se || mean == 0.0;
        Self { function_id: function_id.to_string(), delta, replicas: xs.len(), mean, se, pass }
    }
}

/// Integrates `AF` along a run by the trapezoid rule, re-evaluating it after
/// every step and every event.
struct Integrator<'a> {
    gen: &'a Generator,
    f: &'a TestFunction,
    last: f64,
    integral: f64,
}

impl<'a> Integrator<'a> {
    fn new(gen: &'a Generator, f: &'a TestFunction, state: &LookdownState) -> Self {
        let last = gen.eval_state(f, state).unwrap_or(0.0);
        Self { gen, f, last, integral: 0.0 }
    }
}

impl Observer for Integrator<'_> {
    fn on_step(&mut self, h: f64, state: &LookdownState) {
        let now = self.gen.eval_state(self.f, state).unwrap_or(0.0);
        self.integral += 0.5 * h * (self.last + now);
        self.last = now;
    }

    fn on_event(&mut self, _event: &AppliedEvent, state: &LookdownState) {
        self.last = self.gen.eval_state(self.f, state).unwrap_or(0.0);
    }
}

fn value_at(f: &TestFunction, state: &LookdownState) -> f64 {
    let deg = f.degree();
    f.value(state.zeta, &View::new(Levels::of_state(state), (0..deg).collect()))
}

/// One residual sample from a run of `cfg` over `[start_s, start_s + delta]`.
pub fn residual_sample(cfg: &RunConfig, f: &TestFunction, start_s: f64, delta: f64) -> Result<f64> {
    let dynamics = TwoType::new(cfg.b, cfg.c);
    let gen = Generator::new(cfg.b, cfg.c, cfg.m)?;
    let mut state = LookdownState::initial(cfg, &two_type_labels())?;
    gen.check(f, f.degree(), &Levels::of_state(&state))?;
    let bounds: Vec<_> = dynamics.marks().into_iter().map(|mk| (mk, dynamics.threshold_bound(mk, cfg.m))).collect();
    let mut events = EventGenerator::restricted(cfg.n_levels, cfg.horizon_s, dynamics.cap(cfg.m), &bounds, cfg.seed)?;
    let mut engine = Engine::from_config(cfg, &dynamics, 0.0);
    engine.advance(&mut state, &mut events, Target::S(start_s), &mut NullObserver)?;
    let f0 = value_at(f, &state);
    let mut obs = Integrator::new(&gen, f, &state);
    engine.advance(&mut state, &mut events, Target::S(start_s + delta), &mut obs)?;
    Ok(value_at(f, &state) - f0 - obs.integral)
}

/// Residual of `f` over `[start_s, start_s + delta]` across `replicas`
/// independent runs of the two-type model in `cfg`.
pub fn martingale_residual_from(
    cfg: &RunConfig,
    f: &TestFunction,
    start_s: f64,
    delta: f64,
    replicas: usize,
) -> Result<ResidualReport> {
    cfg.validate()?;
    if !(delta > 0.0) || !(start_s >= 0.0) {
        return Err(invalid(format!("need delta > 0 and start >= 0, got delta = {delta}, start = {start_s}")));
    }
    if cfg.horizon_s < start_s + delta {
        return Err(invalid(format!(
            "horizon {} is shorter than the window end {}",
            cfg.horizon_s,
            start_s + delta
        )));
    }
    if replicas < 2 {
        return Err(invalid("need at least two replicas"));
    }
    let xs = try_map_replicas(replicas, cfg.seed, |_, seed| {
        let mut c = cfg.clone();
        c.seed = seed;
        residual_sample(&c, f, start_s, delta)
    })?;
    Ok(ResidualReport::from_samples(&f.id, delta, &xs))
}

/// [`martingale_residual_from`] started at `s = 0`.
pub fn martingale_residual(cfg: &RunConfig, f: &TestFunction, delta: f64, replicas: usize) -> Result<ResidualReport> {
    martingale_residual_from(cfg, f, 0.0, delta, replicas)
}

/// Monte Carlo values of `Phi_F` and of the symmetrized generator at one
/// state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymmetrizedValue {
    pub v: f64,
    pub phi: f64,
    /// Average of `AF / v`.
    pub a_phi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetrizedEstimate {
    pub per_state: Vec<SymmetrizedValue>,
    pub phi: f64,
    pub phi_se: f64,
    pub a_phi: f64,
    pub a_phi_se: f64,
}

/// Averages `F` and `AF / v` over `k_samples` draws of distinct levels for
/// each state; jumps inside `AF` still range over all levels of the state.
pub fn eval_symmetrized(
    f: &TestFunction,
    gen: &Generator,
    states: &[LookdownState],
    k_samples: usize,
    seed: u64,
) -> Result<SymmetrizedEstimate> {
    if k_samples == 0 {
        return Err(invalid("need at least one sample per state"));
    }
    let deg = f.degree();
    let mut per_state = Vec::with_capacity(states.len());
    for (si, st) in states.iter().enumerate() {
        let levels = Levels::of_state(st);
        gen.check(f, deg, &levels)?;
        let v = st.zeta;
        let active = !st.is_stopped() && v > 1.0 / gen.m && v < gen.m;
        let mut rng = stream_rng(seed, StreamKind::Sampling, 1 + si as u64);
        let (mut phi, mut a_phi) = (0.0, 0.0);
        for _ in 0..k_samples {
            let view = View::new(levels, index::sample(&mut rng, levels.n(), deg).into_vec());
            phi += f.value(v, &view);
            if active {
                a_phi += gen.eval_view(f, v, &view) / v;
            }
        }
        let k = k_samples as f64;
        per_state.push(SymmetrizedValue { v, phi: phi / k, a_phi: a_phi / k });
    }
    let ps: RunningStats = per_state.iter().map(|x| x.phi).collect();
    let pa: RunningStats = per_state.iter().map(|x| x.a_phi).collect();
    Ok(SymmetrizedEstimate { per_state, phi: ps.mean(), phi_se: ps.se(), a_phi: pa.mean(), a_phi_se: pa.se() })
}
