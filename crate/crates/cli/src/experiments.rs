//! Ensemble computations behind the subcommands. Nothing here touches the
//! file system.

use lookdown_core::ensemble::{map_replicas, try_map_replicas};
use lookdown_core::genealogy::{check_ultrametric, default_tol};
use lookdown_core::lookdown::{
    project_masses, run_replica, AppliedEvent, Dynamics, LookdownState, Observer, Resolution, RunConfig, Target,
    TwoType,
};
use lookdown_core::sde::{simulate_direct_with, DirectConfig};
use lookdown_core::stats::{mean_se, moment_test, two_sample_moment_test, MomentTest};
use lookdown_core::Result;
use serde::Serialize;

/// Masses of every replica at the grid points nearest to `times`.
pub fn direct_at_times(cfg: &DirectConfig, replicas: usize, seed: u64, times: &[f64]) -> Result<Vec<Vec<(f64, f64)>>> {
    cfg.validate()?;
    let last = cfg.n_steps();
    let idx: Vec<usize> = times.iter().map(|&t| ((t / cfg.dt).round() as usize).min(last)).collect();
    try_map_replicas(replicas, seed, |_, s| {
        let mut out = Vec::with_capacity(idx.len());
        let mut next = 0;
        simulate_direct_with(cfg, s, |k, _, a, b| {
            while next < idx.len() && idx[next] == k {
                out.push((a, b));
                next += 1;
            }
        })?;
        Ok(out)
    })
}

/// One direct path summarized for the projection comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectEnd {
    pub xi_a: f64,
    pub xi_b: f64,
    /// `xi_a(T) - xi_a(0) - sum of the drift increments`.
    pub mart_a: f64,
    /// `int_0^T xi_a dt` on the Euler grid.
    pub int_a: f64,
}

pub fn direct_ends(cfg: &DirectConfig, replicas: usize, seed: u64) -> Result<Vec<DirectEnd>> {
    cfg.validate()?;
    try_map_replicas(replicas, seed, |_, s| {
        let mut prev = (cfg.xa0, cfg.xb0);
        let mut end = DirectEnd { xi_a: cfg.xa0, xi_b: cfg.xb0, mart_a: 0.0, int_a: 0.0 };
        simulate_direct_with(cfg, s, |k, _, a, b| {
            if k > 0 {
                let (pa, pb) = prev;
                end.mart_a += a - pa - (cfg.b * pa - cfg.c * pa * pb) * cfg.dt;
                end.int_a += pa * cfg.dt;
            }
            prev = (a, b);
            end.xi_a = a;
            end.xi_b = b;
        })?;
        Ok(end)
    })
}

/// Projected masses `(xi_A, xi_B)` of every replica at original time `t`.
pub fn lookdown_projection(cfg: &RunConfig, t: f64, replicas: usize) -> Result<Vec<(f64, f64)>> {
    let dynamics = TwoType::new(cfg.b, cfg.c);
    let labels = lookdown_core::lookdown::two_type_labels();
    try_map_replicas(replicas, cfg.seed, |_, s| {
        let mut c = cfg.clone();
        c.seed = s;
        let tr = run_replica(&c, &dynamics, &labels, &[Target::T(t)], &mut lookdown_core::lookdown::NullObserver)?;
        Ok(project_masses(&tr.final_state))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentComparison {
    pub name: String,
    pub lookdown: f64,
    pub lookdown_se: f64,
    pub direct: f64,
    pub direct_se: f64,
    pub test: MomentTest,
}

/// `E[xi_A]`, `E[xi_B]` and `E[xi_A xi_B]` of the two ensembles, each
/// compared by a two-sample z-test.
pub fn compare_moments(lookdown: &[(f64, f64)], direct: &[DirectEnd], sigmas: f64) -> Result<Vec<MomentComparison>> {
    type Pick = fn(f64, f64) -> f64;
    let picks: [(&str, Pick); 3] = [("xiA", |a, _| a), ("xiB", |_, b| b), ("xiA_xiB", |a, b| a * b)];
    picks
        .iter()
        .map(|(name, f)| {
            let l: Vec<f64> = lookdown.iter().map(|&(a, b)| f(a, b)).collect();
            let d: Vec<f64> = direct.iter().map(|e| f(e.xi_a, e.xi_b)).collect();
            let (lm, ls) = mean_se(&l);
            let (dm, ds) = mean_se(&d);
            Ok(MomentComparison {
                name: name.to_string(),
                lookdown: lm,
                lookdown_se: ls,
                direct: dm,
                direct_se: ds,
                test: two_sample_moment_test(&l, &d, sigmas)?,
            })
        })
        .collect()
}

/// `E[(M^A_T)^2 - int_0^T xi_A dt] = 0`.
pub fn bracket_test(direct: &[DirectEnd], sigmas: f64) -> Result<MomentTest> {
    let xs: Vec<f64> = direct.iter().map(|e| e.mart_a * e.mart_a - e.int_a).collect();
    moment_test(&xs, 0.0, sigmas)
}

/// Counts of the structural checks made by [`InvariantObserver`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct InvariantCounts {
    pub ultrametric_checked: usize,
    pub ultrametric_passed: usize,
    pub parent_checked: usize,
    pub parent_passed: usize,
    pub clock_checked: usize,
    pub clock_passed: usize,
    pub windows_checked: usize,
    pub windows_passed: usize,
    pub monotype_checked: usize,
    pub monotype_passed: usize,
}

impl InvariantCounts {
    pub fn merge(&self, o: &InvariantCounts) -> InvariantCounts {
        InvariantCounts {
            ultrametric_checked: self.ultrametric_checked + o.ultrametric_checked,
            ultrametric_passed: self.ultrametric_passed + o.ultrametric_passed,
            parent_checked: self.parent_checked + o.parent_checked,
            parent_passed: self.parent_passed + o.parent_passed,
            clock_checked: self.clock_checked + o.clock_checked,
            clock_passed: self.clock_passed + o.clock_passed,
            windows_checked: self.windows_checked + o.windows_checked,
            windows_passed: self.windows_passed + o.windows_passed,
            monotype_checked: self.monotype_checked + o.monotype_checked,
            monotype_passed: self.monotype_passed + o.monotype_passed,
        }
    }
}

/// Relative tolerance of the distance growth law.
pub const GROWTH_TOL: f64 = 1e-6;
/// Relative tolerance of the clock against the trapezoid integral of the mass.
pub const CLOCK_TOL: f64 = 1e-9;

/// Checks after every event: ultrametricity, zero distance to the parent and
/// unchanged types in monotype runs. Between events it follows `R(1,2)`
/// against `2 int zeta du`, and the clock against its own quadrature.
#[derive(Debug, Default)]
pub struct InvariantObserver {
    pub counts: InvariantCounts,
    /// Most windows to count; unlimited when `None`.
    pub max_windows: Option<usize>,
    integral: f64,
    last_zeta: f64,
    win_r12: Option<f64>,
    win_int: f64,
    win_ok: bool,
    win_len: f64,
    monotype: Option<Vec<u8>>,
}

impl InvariantObserver {
    pub fn new() -> Self {
        Self::default()
    }

    fn open_window(&mut self, state: &LookdownState) {
        self.win_r12 = state.distance(0, 1);
        self.win_int = 0.0;
        self.win_ok = true;
        self.win_len = 0.0;
    }

    fn close_window(&mut self) {
        if self.win_r12.is_some() && self.win_len > 0.0 {
            let room = self.max_windows.map_or(true, |m| self.counts.windows_checked < m);
            if room {
                self.counts.windows_checked += 1;
                self.counts.windows_passed += self.win_ok as usize;
            }
        }
        self.win_r12 = None;
    }

    /// Closes the window still open at the end of a run.
    pub fn finish(&mut self) {
        self.close_window();
    }
}

impl Observer for InvariantObserver {
    fn on_start(&mut self, state: &LookdownState) {
        self.integral = state.t_accum;
        self.last_zeta = state.zeta;
        if state.types.is_monotype() {
            self.monotype = Some(state.types.types().to_vec());
        }
        self.open_window(state);
    }

    fn on_step(&mut self, h: f64, state: &LookdownState) {
        let inc = 0.5 * h * (self.last_zeta + state.zeta);
        self.integral += inc;
        self.last_zeta = state.zeta;
        self.counts.clock_checked += 1;
        if (self.integral - state.t_accum).abs() <= CLOCK_TOL * self.integral.max(1.0) {
            self.counts.clock_passed += 1;
        }
        if let (Some(r0), Some(r)) = (self.win_r12, state.distance(0, 1)) {
            self.win_int += inc;
            self.win_len += h;
            let want = 2.0 * self.win_int;
            if ((r - r0) - want).abs() > GROWTH_TOL * want.abs().max(f64::MIN_POSITIVE) {
                self.win_ok = false;
            }
        }
    }

    fn on_event(&mut self, event: &AppliedEvent, state: &LookdownState) {
        self.close_window();
        if let Some(d) = state.distances() {
            self.counts.ultrametric_checked += 1;
            if check_ultrametric(&d, default_tol(&d)).map(|r| r.pass).unwrap_or(false) {
                self.counts.ultrametric_passed += 1;
            }
            if let AppliedEvent::Potential { atom, resolution: Resolution::Replace { parent } } = event {
                self.counts.parent_checked += 1;
                if d.get(atom.level, *parent) == 0.0 {
                    self.counts.parent_passed += 1;
                }
            }
        }
        if let Some(g) = &self.monotype {
            self.counts.monotype_checked += 1;
            if state.types.types() == g.as_slice() {
                self.counts.monotype_passed += 1;
            }
        }
        self.open_window(state);
    }
}

/// Runs every replica under an [`InvariantObserver`] and returns the counts
/// together with the final states.
pub fn invariant_suite<D: Dynamics + Sync>(
    cfg: &RunConfig,
    dynamics: &D,
    labels: &[String],
    targets: &[Target],
    replicas: usize,
) -> Result<(InvariantCounts, Vec<LookdownState>)> {
    let runs = try_map_replicas(replicas, cfg.seed, |_, s| {
        let mut c = cfg.clone();
        c.seed = s;
        let mut obs = InvariantObserver::new();
        let tr = run_replica(&c, dynamics, labels, targets, &mut obs)?;
        obs.finish();
        Ok((obs.counts, tr.final_state))
    })?;
    let counts = runs.iter().fold(InvariantCounts::default(), |acc, r| acc.merge(&r.0));
    Ok((counts, runs.into_iter().map(|r| r.1).collect()))
}

/// Final states of independent replicas.
pub fn final_states<D: Dynamics + Sync>(
    cfg: &RunConfig,
    dynamics: &D,
    labels: &[String],
    target: Target,
    replicas: usize,
) -> Result<Vec<LookdownState>> {
    try_map_replicas(replicas, cfg.seed, |_, s| {
        let mut c = cfg.clone();
        c.seed = s;
        Ok(run_replica(&c, dynamics, labels, &[target], &mut lookdown_core::lookdown::NullObserver)?.final_state)
    })
}

/// Fraction of replicas with `xi_B = 0` at each of `times`.
pub fn b_extinction_fractions(cfg: &DirectConfig, replicas: usize, seed: u64, times: &[f64]) -> Result<Vec<f64>> {
    let runs = direct_at_times(cfg, replicas, seed, times)?;
    Ok((0..times.len())
        .map(|k| runs.iter().filter(|r| r[k].1 == 0.0).count() as f64 / replicas as f64)
        .collect())
}

/// Fraction of replicas with `xi_A = 0` at `t`, from a single-type start.
pub fn a_extinction_fraction(cfg: &DirectConfig, replicas: usize, seed: u64, t: f64) -> Result<f64> {
    let hits: Vec<bool> = map_replicas(replicas, seed, |_, s| {
        let mut last = cfg.xa0;
        let stop = ((t / cfg.dt).round() as usize).min(cfg.n_steps());
        simulate_direct_with(cfg, s, |k, _, a, _| {
            if k <= stop {
                last = a;
            }
        })
        .map(|_| last == 0.0)
        .unwrap_or(false)
    });
    Ok(hits.iter().filter(|&&h| h).count() as f64 / replicas as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lookdown_core::lookdown::two_type_labels;

    #[test]
    fn direct_probes_pick_grid_points() {
        let cfg = DirectConfig::new(1.0, 1.0, 0.0, 0.0, 0.1, 1.0);
        let runs = direct_at_times(&cfg, 3, 1, &[0.0, 0.5, 0.5, 1.0]).unwrap();
        assert!(runs.iter().all(|r| r.len() == 4 && r[0] == (1.0, 1.0) && r[1] == r[2]));
    }

    #[test]
    fn frozen_direct_paths_have_no_martingale_part() {
        let mut cfg = DirectConfig::new(1.0, 0.5, 0.3, 0.2, 0.01, 1.0);
        cfg.noise = 0.0;
        for e in direct_ends(&cfg, 2, 3).unwrap() {
            assert!(e.mart_a.abs() < 1e-12);
            assert!(e.int_a > 1.0);
        }
    }

    #[test]
    fn invariant_observer_counts() {
        let cfg = RunConfig::new(8, 1.0, 1.0, 10.0, 0.5, 5);
        let (counts, finals) =
            invariant_suite(&cfg, &TwoType::new(1.0, 1.0), &two_type_labels(), &[Target::S(0.5)], 4).unwrap();
        assert_eq!(finals.len(), 4);
        assert!(counts.ultrametric_checked > 0 && counts.windows_checked > 0);
        assert_eq!(counts.ultrametric_checked, counts.ultrametric_passed);
        assert_eq!(counts.windows_checked, counts.windows_passed);
        assert_eq!(counts.clock_checked, counts.clock_passed);
        assert_eq!(counts.parent_checked, counts.parent_passed);
    }
}
