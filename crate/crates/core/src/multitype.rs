//! Finitely many types with fecundity `b(h)`, competition kernel `c(h, h')`
//! and an optional mutation kernel `ell(h, .)`.
//!
//! Potential atoms on a level of type `h` at mass `v`, with `mu` the level
//! frequencies:
//! - `beta` is active if `z <= v * int b dmu`; the parent is drawn from the
//!   levels size-biased by `b`;
//! - `delta` is active if `z <= c(h, mu) * v^2` with `c(h, mu) = int c(h, .) dmu`;
//!   the parent is a uniform level;
//! - `lambda` is active if `z <= v`; the level switches to the `w`-quantile of
//!   `ell(h, .)` and keeps its distances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::events::{EventStream, Mark, PotentialAtom};
use crate::lookdown::{accepts, advance_with, Dynamics, LookdownState, NullObserver, Resolution, RunConfig, Target, Trajectory, TypeConfig};

/// Model file contents. Missing rates are 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultitypeModel {
    pub types: Vec<String>,
    #[serde(default)]
    pub b: BTreeMap<String, f64>,
    #[serde(default)]
    pub c: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub ell: BTreeMap<String, BTreeMap<String, f64>>,
    /// Mutation is on when `ell` is given, unless this says otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<bool>,
}

impl MultitypeModel {
    /// Types `A` and `B` with `b(A) = b`, `b(B) = 0`, `c(A, B) = c(B, A) = c`
    /// and no mutation.
    pub fn two_type(b: f64, c: f64) -> Self {
        let row = |k: &str| BTreeMap::from([(k.to_string(), c)]);
        Self {
            types: vec!["A".into(), "B".into()],
            b: BTreeMap::from([("A".into(), b), ("B".into(), 0.0)]),
            c: BTreeMap::from([("A".into(), row("B")), ("B".into(), row("A"))]),
            ell: BTreeMap::new(),
            mutation: None,
        }
    }

    pub fn mutation_enabled(&self) -> bool {
        self.mutation.unwrap_or(!self.ell.is_empty())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        crate::from_json_strict(text)
    }

    pub fn validate(&self) -> Result<()> {
        self.compile().map(|_| ())
    }

    /// Index form of the model.
    pub fn compile(&self) -> Result<MultitypeDynamics> {
        let k = self.types.len();
        if k == 0 || k > u8::MAX as usize {
            return Err(invalid(format!("need between 1 and 255 types, got {k}")));
        }
        let index = |name: &str| -> Result<usize> {
            self.types.iter().position(|t| t == name).ok_or_else(|| invalid(format!("unknown type {name:?}")))
        };
        for (i, t) in self.types.iter().enumerate() {
            if self.types[..i].contains(t) {
                return Err(invalid(format!("duplicate type {t:?}")));
            }
        }
        let rate = |what: &str, x: f64| -> Result<f64> {
            if x >= 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(invalid(format!("{what} must be finite and >= 0, got {x}")))
            }
        };
        let mut b = vec![0.0; k];
        for (name, &x) in &self.b {
            b[index(name)?] = rate("b", x)?;
        }
        let mut c = vec![0.0; k * k];
        for (h, row) in &self.c {
            let i = index(h)?;
            for (h2, &x) in row {
                c[i * k + index(h2)?] = rate("c", x)?;
            }
        }
        let mutation = self.mutation_enabled();
        let ell = if mutation {
            let mut cum = vec![0.0; k * k];
            for (i, h) in self.types.iter().enumerate() {
                let row = self.ell.get(h).ok_or_else(|| invalid(format!("mutation kernel has no row for {h:?}")))?;
                let mut p = vec![0.0; k];
                for (h2, &x) in row {
                    p[index(h2)?] = rate("ell", x)?;
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("mutation kernel row {h:?} sums to {total}, not 1")));
                }
                let mut acc = 0.0;
                for j in 0..k {
                    acc += p[j];
                    cum[i * k + j] = acc;
                }
            }
            Some(cum)
        } else {
            for h in self.ell.keys() {
                index(h)?;
            }
            None
        };
        let max_b = b.iter().copied().fold(0.0, f64::max);
        let max_c = c.iter().copied().fold(0.0, f64::max);
        Ok(MultitypeDynamics { k, b, c, ell, max_b, max_c })
    }
}

/// Compiled model, used as the engine's dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct MultitypeDynamics {
    k: usize,
    b: Vec<f64>,
    c: Vec<f64>,
    /// Row-wise cumulative mutation kernel.
    ell: Option<Vec<f64>>,
    max_b: f64,
    max_c: f64,
}

impl MultitypeDynamics {
    /// `int b dmu` over the level frequencies.
    pub fn mean_b(&self, types: &TypeConfig) -> f64 {
        (0..self.k).map(|h| self.b[h] * types.freq(h as u8)).sum()
    }

    /// `c(h, mu) = int c(h, h') mu(dh')`.
    pub fn competition(&self, h: u8, types: &TypeConfig) -> f64 {
        let row = &self.c[h as usize * self.k..(h as usize + 1) * self.k];
        row.iter().enumerate().map(|(j, &x)| x * types.freq(j as u8)).sum()
    }

    fn mutate(&self, h: u8, w: f64) -> u8 {
        let cum = self.ell.as_ref().expect("mutation enabled");
        let row = &cum[h as usize * self.k..(h as usize + 1) * self.k];
        // first entry reaching w with positive mass
        let mut prev = 0.0;
        let mut last = h;
        for (j, &x) in row.iter().enumerate() {
            if x > prev {
                last = j as u8;
                if x >= w {
                    return j as u8;
                }
            }
            prev = x;
        }
        last
    }
}

impl Dynamics for MultitypeDynamics {
    fn n_types(&self) -> usize {
        self.k
    }

    fn marks(&self) -> Vec<Mark> {
        let mut m = vec![Mark::Beta, Mark::Delta];
        if self.ell.is_some() {
            m.push(Mark::Lambda);
        }
        m
    }

    fn cap(&self, m: f64) -> f64 {
        let cap = self.max_b.max(self.max_c) * m * m;
        if self.ell.is_some() {
            cap.max(m)
        } else {
            cap
        }
    }

    fn threshold_bound(&self, mark: Mark, m: f64) -> f64 {
        match mark {
            Mark::Beta => self.max_b * m,
            Mark::Delta => self.max_c * m * m,
            Mark::Lambda if self.ell.is_some() => m,
            Mark::Lambda => 0.0,
        }
    }

    fn growth_rate(&self, zeta: f64, types: &TypeConfig) -> f64 {
        drift_general(zeta, types, self)
    }

    fn resolve(&self, atom: &PotentialAtom, zeta: f64, types: &TypeConfig) -> Resolution {
        match atom.mark {
            Mark::Beta if accepts(atom.z, self.mean_b(types) * zeta) => types
                .quantile_level_weighted(atom.w, &self.b)
                .map_or(Resolution::Reject, |parent| Resolution::Replace { parent }),
            Mark::Delta if accepts(atom.z, self.competition(types.get(atom.level), types) * zeta * zeta) => {
                Resolution::Replace { parent: types.quantile_level(atom.w) }
            }
            Mark::Lambda if self.ell.is_some() && accepts(atom.z, zeta) => {
                Resolution::Mutate { to: self.mutate(types.get(atom.level), atom.w) }
            }
            _ => Resolution::Reject,
        }
    }
}

fn drift_general(v: f64, types: &TypeConfig, d: &MultitypeDynamics) -> f64 {
    let comp: f64 = (0..d.k).map(|h| types.freq(h as u8) * d.competition(h as u8, types)).sum();
    v * d.mean_b(types) - v * v * comp
}

/// Per-capita mass drift `v int b dmu - v^2 int c(h, mu) mu(dh)`.
pub fn drift_total_mass_general(v: f64, types: &TypeConfig, model: &MultitypeDynamics) -> Result<f64> {
    if !(v > 0.0) {
        return Err(invalid(format!("mass must be > 0, got {v}")));
    }
    if types.n_types() != model.k {
        return Err(invalid("type configuration does not match the model"));
    }
    Ok(drift_general(v, types, model))
}

/// The type that a level of type `h` carries after the atom `(z, w, mark)`.
#[allow(clippy::too_many_arguments)]
pub fn q_general(h: u8, types: &TypeConfig, v: f64, z: f64, w: f64, mark: Mark, model: &MultitypeDynamics) -> u8 {
    match mark {
        Mark::Beta if accepts(z, model.mean_b(types) * v) => types
            .quantile_level_weighted(w, &model.b)
            .map_or(h, |k| types.get(k)),
        Mark::Delta if accepts(z, model.competition(h, types) * v * v) => types.get(types.quantile_level(w)),
        Mark::Lambda if model.ell.is_some() && accepts(z, v) => model.mutate(h, w),
        _ => h,
    }
}

/// Multitype run of `state` against a materialized stream up to the run
/// horizon, sampled at the lookdown times `outputs`.
pub fn advance_multitype(
    state: LookdownState,
    cfg: &RunConfig,
    model: &MultitypeModel,
    events: &EventStream,
    outputs: &[f64],
) -> Result<Trajectory> {
    let dynamics = model.compile()?;
    if state.types.n_types() != dynamics.n_types() {
        return Err(invalid("state and model disagree on the number of types"));
    }
    let mut targets: Vec<Target> = outputs.iter().map(|&s| Target::S(s)).collect();
    targets.push(Target::S(cfg.horizon_s));
    advance_with(state, cfg, &dynamics, &mut events.cursor(), &targets, &mut NullObserver)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lookdown::{q_two_type, run_replica, InitialTypes, A, B};
    use crate::sde::drift_total_mass;

    fn flip_model() -> MultitypeModel {
        let mut m = MultitypeModel::two_type(0.0, 0.0);
        m.ell = BTreeMap::from([
            ("A".into(), BTreeMap::from([("B".into(), 1.0)])),
            ("B".into(), BTreeMap::from([("A".into(), 1.0)])),
        ]);
        m
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = flip_model();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(MultitypeModel::from_json(&text).unwrap(), m);
        assert!(m.validate().is_ok());
        let bad = r#"{"types": ["A"], "b": {"Z": 1.0}}"#;
        assert!(MultitypeModel::from_json(bad).unwrap().validate().is_err());
        let bad = r#"{"types": ["A", "B"], "ell": {"A": {"A": 0.5}, "B": {"B": 1.0}}}"#;
        assert!(MultitypeModel::from_json(bad).unwrap().validate().is_err());
        assert!(MultitypeModel::from_json(r#"{"types": ["A"], "x": 1}"#).is_err());
        let neg = r#"{"types": ["A"], "b": {"A": -1.0}}"#;
        assert!(MultitypeModel::from_json(neg).unwrap().validate().is_err());
    }

    #[test]
    fn two_type_embedding_reproduces_update_rule() {
        let (b, c) = (0.8, 0.6);
        let d = MultitypeModel::two_type(b, c).compile().unwrap();
        for types in [vec![A, B, B, A, B], vec![B; 5], vec![A; 5], vec![A, A, B, A, A]] {
            let g = TypeConfig::new(types, 2).unwrap();
            for v in [0.3, 1.0, 2.5] {
                for h in [A, B] {
                    for mark in [Mark::Beta, Mark::Delta] {
                        for zi in 0..=40 {
                            for wi in 0..=20 {
                                let (z, w) = (zi as f64 * 0.1, wi as f64 * 0.05);
                                assert_eq!(
                                    q_general(h, &g, v, z, w, mark, &d),
                                    q_two_type(h, &g, v, z, w, mark, b, c),
                                    "{h} {mark:?} z={z} w={w} v={v}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn drift_examples() {
        let d = MultitypeModel::two_type(1.3, 0.7).compile().unwrap();
        let g = TypeConfig::new(vec![A, B, B, A, A], 2).unwrap();
        let want = drift_total_mass(1.7, 0.6, 1.3, 0.7).unwrap();
        assert!((drift_total_mass_general(1.7, &g, &d).unwrap() - want).abs() < 1e-12);

        let zero = MultitypeModel::two_type(0.0, 0.0).compile().unwrap();
        assert_eq!(drift_total_mass_general(2.0, &g, &zero).unwrap(), 0.0);

        let mono = MultitypeModel::from_json(r#"{"types": ["A"], "b": {"A": 2.0}}"#).unwrap().compile().unwrap();
        let g1 = TypeConfig::new(vec![0; 4], 1).unwrap();
        assert_eq!(drift_total_mass_general(1.5, &g1, &mono).unwrap(), 3.0);
    }

    #[test]
    fn identity_kernel_and_zero_competition() {
        let mut m = MultitypeModel::two_type(0.0, 0.0);
        m.ell = BTreeMap::from([
            ("A".into(), BTreeMap::from([("A".into(), 1.0)])),
            ("B".into(), BTreeMap::from([("B".into(), 1.0)])),
        ]);
        let d = m.compile().unwrap();
        let g = TypeConfig::new(vec![A, B], 2).unwrap();
        for wi in 0..=10 {
            assert_eq!(q_general(A, &g, 1.0, 0.1, wi as f64 / 10.0, Mark::Lambda, &d), A);
            assert_eq!(q_general(B, &g, 1.0, 0.0, wi as f64 / 10.0, Mark::Delta, &d), B);
        }
        assert!(d.cap(10.0) >= 10.0);
    }

    #[test]
    fn size_biased_parent() {
        let m = MultitypeModel::from_json(r#"{"types": ["X", "Y", "Z"], "b": {"X": 1.0, "Y": 3.0}}"#).unwrap();
        let d = m.compile().unwrap();
        let g = TypeConfig::new(vec![2, 0, 1, 2], 3).unwrap();
        // weights 0, 1, 3, 0: total 4
        assert_eq!(q_general(2, &g, 1.0, 0.0, 0.2, Mark::Beta, &d), 0);
        assert_eq!(q_general(2, &g, 1.0, 0.0, 0.25, Mark::Beta, &d), 0);
        assert_eq!(q_general(2, &g, 1.0, 0.0, 0.3, Mark::Beta, &d), 1);
    }

    #[test]
    fn pure_mutation_flips_like_a_markov_chain() {
        // level 0 receives no arrows; with v = 1 it flips at rate 1, so
        // P(type unchanged at s) = (1 + exp(-2 s)) / 2
        let d = flip_model().compile().unwrap();
        let labels = flip_model().types;
        let s = 0.5;
        let reps = 2000;
        let mut same = 0;
        for r in 0..reps {
            let mut cfg = RunConfig::new(2, 0.0, 0.0, 10.0, s, crate::seed::replica_seed(3, r));
            cfg.noise = 0.0;
            cfg.initial_types = InitialTypes::Explicit(vec!["A".into(), "A".into()]);
            let tr = run_replica(&cfg, &d, &labels, &[], &mut NullObserver).unwrap();
            if tr.final_state.types.get(0) == A {
                same += 1;
            }
            assert_eq!(tr.final_state.zeta, 1.0);
        }
        let p = (1.0 + (-2.0 * s).exp()) / 2.0;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((same as f64 / reps as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn mutation_leaves_distances() {
        use crate::genealogy::DistMatrix;
        use crate::lookdown::{AppliedEvent, Observer};

        struct Probe {
            last: Option<DistMatrix>,
            mutations: usize,
        }
        impl Observer for Probe {
            fn on_step(&mut self, _h: f64, st: &LookdownState) {
                self.last = st.distances();
            }
            fn on_event(&mut self, e: &AppliedEvent, st: &LookdownState) {
                if let AppliedEvent::Potential { resolution: Resolution::Mutate { .. }, .. } = e {
                    self.mutations += 1;
                    assert_eq!(st.distances(), self.last);
                }
                self.last = st.distances();
            }
        }
        let d = flip_model().compile().unwrap();
        let mut cfg = RunConfig::new(4, 0.0, 0.0, 10.0, 2.0, 5);
        cfg.noise = 0.0;
        let mut p = Probe { last: None, mutations: 0 };
        run_replica(&cfg, &d, &flip_model().types, &[], &mut p).unwrap();
        assert!(p.mutations > 0);
    }
}
