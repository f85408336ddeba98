//! The particle-system engine: total mass, type configuration and genealogical
//! distances on `n` levels, driven by Brownian noise, neutral arrows and
//! thinned potential events, and stopped when the mass leaves `(1/M, M)`.
//!
//! Levels are 0-based in this API. Files written by the CLI use 1-based levels.

mod dynamics;
mod engine;
mod noise;
mod ops;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::genealogy::{check_ultrametric, default_tol, DistMatrix, Genealogy};
use crate::seed::{stream_rng, StreamKind};

pub(crate) use dynamics::accepts;
pub use dynamics::{Dynamics, Resolution, TwoType};
pub use engine::{
    advance, advance_with, run_replica, AppliedEvent, Engine, NullObserver, Observer, Target, Trajectory,
};
pub use noise::BrownianNoise;
pub use ops::{
    activation_check, apply_neutral_event, apply_potential_event, grow_distances, project_masses, q_two_type,
    sample_individual,
};

/// Type index of `A` in two-type runs.
pub const A: u8 = 0;
/// Type index of `B` in two-type runs.
pub const B: u8 = 1;
pub const TWO_TYPE_LABELS: [&str; 2] = ["A", "B"];

/// Types of the `n` levels with per-type counts kept in sync.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeConfig {
    types: Vec<u8>,
    counts: Vec<usize>,
}

impl TypeConfig {
    pub fn new(types: Vec<u8>, n_types: usize) -> Result<Self> {
        let mut counts = vec![0; n_types];
        for &t in &types {
            *counts
                .get_mut(t as usize)
                .ok_or_else(|| invalid(format!("type index {t} outside 0..{n_types}")))? += 1;
        }
        Ok(Self { types, counts })
    }

    pub fn n(&self) -> usize {
        self.types.len()
    }

    pub fn n_types(&self) -> usize {
        self.counts.len()
    }

    pub fn types(&self) -> &[u8] {
        &self.types
    }

    #[inline]
    pub fn get(&self, level: usize) -> u8 {
        self.types[level]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    #[inline]
    pub fn count(&self, h: u8) -> usize {
        self.counts[h as usize]
    }

    /// Empirical frequency of type `h` over the `n` levels.
    #[inline]
    pub fn freq(&self, h: u8) -> f64 {
        self.counts[h as usize] as f64 / self.types.len() as f64
    }

    pub fn is_monotype(&self) -> bool {
        self.counts.iter().filter(|&&c| c > 0).count() <= 1
    }

    pub(crate) fn set(&mut self, level: usize, h: u8) {
        let old = self.types[level];
        self.counts[old as usize] -= 1;
        self.counts[h as usize] += 1;
        self.types[level] = h;
    }

    pub(crate) fn arrow(&mut self, src: usize, dst: usize) {
        let n = self.types.len();
        let born = self.types[src];
        let dropped = self.types[n - 1];
        self.types.copy_within(dst..n - 1, dst + 1);
        self.types[dst] = born;
        self.counts[dropped as usize] -= 1;
        self.counts[born as usize] += 1;
    }

    /// The `ceil(w * n)`-th level (1-based rank; `w = 0` gives the first).
    #[inline]
    pub fn quantile_level(&self, w: f64) -> usize {
        rank_of(w, self.types.len()) - 1
    }

    /// The `ceil(w * m)`-th of the `m` levels carrying type `h`, in ascending
    /// level order.
    pub fn quantile_level_of_type(&self, w: f64, h: u8) -> Option<usize> {
        let m = self.count(h);
        if m == 0 {
            return None;
        }
        let rank = rank_of(w, m);
        self.types.iter().enumerate().filter(|(_, &t)| t == h).nth(rank - 1).map(|(i, _)| i)
    }

    /// Quantile of the level law with weights `weight[type]`: the lowest level
    /// with positive weight whose cumulative weight reaches `w * total`.
    pub fn quantile_level_weighted(&self, w: f64, weight: &[f64]) -> Option<usize> {
        let total: f64 = self.counts.iter().zip(weight).map(|(&c, &x)| c as f64 * x).sum();
        if !(total > 0.0) {
            return None;
        }
        let target = w * total;
        let mut acc = 0.0;
        let mut last = None;
        for (i, &t) in self.types.iter().enumerate() {
            let x = weight[t as usize];
            if x > 0.0 {
                acc += x;
                last = Some(i);
                if acc >= target {
                    return Some(i);
                }
            }
        }
        last
    }
}

#[inline]
fn rank_of(w: f64, m: usize) -> usize {
    ((w * m as f64).ceil() as usize).clamp(1, m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopStatus {
    None,
    HitLower,
    HitUpper,
}

impl StopStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StopStatus::None => "none",
            StopStatus::HitLower => "hit_lower",
            StopStatus::HitUpper => "hit_upper",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialTypes {
    /// One label per level.
    Explicit(Vec<String>),
    /// Independent draws with the given type frequencies.
    Iid(Vec<f64>),
    /// Counts rounded from the frequencies (largest remainder), then shuffled.
    Exact(Vec<f64>),
}

impl InitialTypes {
    pub fn iid_two_type(mu_a: f64) -> Self {
        InitialTypes::Iid(vec![mu_a, 1.0 - mu_a])
    }

    pub fn exact_two_type(mu_a: f64) -> Self {
        InitialTypes::Exact(vec![mu_a, 1.0 - mu_a])
    }

    pub fn realize(&self, n: usize, labels: &[String], seed: u64) -> Result<Vec<u8>> {
        let mut rng = stream_rng(seed, StreamKind::Init, 0);
        match self {
            InitialTypes::Explicit(v) => {
                if v.len() != n {
                    return Err(invalid(format!("{} initial types given for {n} levels", v.len())));
                }
                v.iter()
                    .map(|l| {
                        labels
                            .iter()
                            .position(|x| x == l)
                            .map(|p| p as u8)
                            .ok_or_else(|| invalid(format!("unknown type label {l:?}")))
                    })
                    .collect()
            }
            InitialTypes::Iid(freq) => {
                check_freq(freq, labels.len())?;
                Ok((0..n)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        for (h, &f) in freq.iter().enumerate() {
                            acc += f;
                            if u < acc {
                                return h as u8;
                            }
                        }
                        freq.iter().rposition(|&f| f > 0.0).unwrap_or(0) as u8
                    })
                    .collect())
            }
            InitialTypes::Exact(freq) => {
                check_freq(freq, labels.len())?;
                let mut counts: Vec<usize> = freq.iter().map(|f| (f * n as f64).floor() as usize).collect();
                let mut rest = n - counts.iter().sum::<usize>();
                let mut order: Vec<usize> = (0..freq.len()).collect();
                order.sort_by(|&a, &b| {
                    let fa = freq[a] * n as f64 - counts[a] as f64;
                    let fb = freq[b] * n as f64 - counts[b] as f64;
                    fb.total_cmp(&fa).then(a.cmp(&b))
                });
                for &h in order.iter().cycle() {
                    if rest == 0 {
                        break;
                    }
                    counts[h] += 1;
                    rest -= 1;
                }
                let mut types: Vec<u8> =
                    counts.iter().enumerate().flat_map(|(h, &c)| std::iter::repeat(h as u8).take(c)).collect();
                types.shuffle(&mut rng);
                Ok(types)
            }
        }
    }
}

fn check_freq(freq: &[f64], n_types: usize) -> Result<()> {
    if freq.len() != n_types {
        return Err(invalid(format!("{} frequencies given for {n_types} types", freq.len())));
    }
    if freq.iter().any(|&f| !(f >= 0.0)) || (freq.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid("type frequencies must be nonnegative and sum to 1"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDistances {
    Zero,
    /// Full `n x n` matrix.
    Matrix(Vec<Vec<f64>>),
}

fn default_dt() -> f64 {
    1e-3
}

fn default_one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_types() -> InitialTypes {
    InitialTypes::exact_two_type(0.5)
}

fn default_distances() -> InitialDistances {
    InitialDistances::Zero
}

/// Parameters of one lookdown run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_levels: usize,
    pub b: f64,
    pub c: f64,
    /// Stopping bound `M`: the run halts when the mass leaves `(1/M, M)`.
    pub m: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    pub horizon_s: f64,
    #[serde(default)]
    pub seed: u64,
    pub v0: f64,
    #[serde(default = "default_types")]
    pub initial_types: InitialTypes,
    #[serde(default = "default_distances")]
    pub initial_distances: InitialDistances,
    /// Keep the distance matrix; runs that only need masses and types skip it.
    #[serde(default = "default_true")]
    pub track_genealogy: bool,
    /// Multiplier on the Brownian driver of the mass; 1 for the actual model.
    #[serde(default = "default_one")]
    pub noise: f64,
}

impl RunConfig {
    pub fn new(n_levels: usize, b: f64, c: f64, m: f64, horizon_s: f64, seed: u64) -> Self {
        Self {
            n_levels,
            b,
            c,
            m,
            dt_s: default_dt(),
            horizon_s,
            seed,
            v0: 1.0,
            initial_types: default_types(),
            initial_distances: InitialDistances::Zero,
            track_genealogy: true,
            noise: 1.0,
        }
    }

    /// Rate cap of the potential events: `max(b, c) * M^2`.
    pub fn cap(&self) -> f64 {
        self.b.max(self.c) * self.m * self.m
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_levels < 1 {
            return Err(invalid("n_levels must be >= 1"));
        }
        if !(self.b >= 0.0) || !(self.c >= 0.0) {
            return Err(invalid("b and c must be >= 0"));
        }
        if !(self.m > 1.0) || !self.m.is_finite() {
            return Err(invalid(format!("M must be finite and > 1, got {}", self.m)));
        }
        if !(self.v0 > 1.0 / self.m && self.v0 < self.m) {
            return Err(invalid(format!("v0 = {} must lie in (1/M, M)", self.v0)));
        }
        if !(self.dt_s > 0.0) {
            return Err(invalid(format!("dt_s must be > 0, got {}", self.dt_s)));
        }
        if !(self.horizon_s >= 0.0) {
            return Err(invalid(format!("horizon_s must be >= 0, got {}", self.horizon_s)));
        }
        if !(self.noise >= 0.0) {
            return Err(invalid("noise must be >= 0"));
        }
        if let InitialDistances::Matrix(rows) = &self.initial_distances {
            if rows.len() != self.n_levels {
                return Err(invalid(format!("initial distance matrix has {} rows for {} levels", rows.len(), self.n_levels)));
            }
            let d = DistMatrix::from_rows(rows)?;
            if let Some(v) = check_ultrametric(&d, default_tol(&d))?.worst {
                return Err(v.into_error());
            }
        }
        Ok(())
    }
}

/// The state `(zeta, R, G)` at lookdown time `s`, with the accumulated
/// original time `t(s)` and the stop status.
#[derive(Clone, Debug, PartialEq)]
pub struct LookdownState {
    pub s: f64,
    pub zeta: f64,
    pub t_accum: f64,
    pub types: TypeConfig,
    pub genealogy: Option<Genealogy>,
    pub stop: StopStatus,
}

impl LookdownState {
    /// Builds a state from explicit parts; `genealogy` may be omitted.
    pub fn new(zeta: f64, types: TypeConfig, genealogy: Option<Genealogy>) -> Result<Self> {
        if !(zeta > 0.0) {
            return Err(invalid(format!("mass must be > 0, got {zeta}")));
        }
        if let Some(g) = &genealogy {
            if g.n() != types.n() {
                return Err(invalid("genealogy and type configuration disagree on n"));
            }
        }
        Ok(Self { s: 0.0, zeta, t_accum: 0.0, types, genealogy, stop: StopStatus::None })
    }

    /// Two-type state with the given `A`/`B` vector and zero distances.
    pub fn two_type(zeta: f64, types: Vec<u8>) -> Result<Self> {
        let n = types.len();
        Self::new(zeta, TypeConfig::new(types, 2)?, Some(Genealogy::zero(n, 0.0)))
    }

    /// Initial state of a run with the given type labels.
    pub fn initial(cfg: &RunConfig, labels: &[String]) -> Result<Self> {
        cfg.validate()?;
        let types = cfg.initial_types.realize(cfg.n_levels, labels, cfg.seed)?;
        let genealogy = cfg.track_genealogy.then(|| match &cfg.initial_distances {
            InitialDistances::Zero => Ok(Genealogy::zero(cfg.n_levels, 0.0)),
            InitialDistances::Matrix(rows) => Ok(Genealogy::from_distances(&DistMatrix::from_rows(rows)?, 0.0)),
        });
        let genealogy = genealogy.transpose()?;
        Self::new(cfg.v0, TypeConfig::new(types, labels.len())?, genealogy)
    }

    pub fn initial_two_type(cfg: &RunConfig) -> Result<Self> {
        Self::initial(cfg, &two_type_labels())
    }

    pub fn n(&self) -> usize {
        self.types.n()
    }

    /// Empirical frequency of `A`.
    pub fn mu_a(&self) -> f64 {
        self.types.freq(A)
    }

    pub fn distance(&self, i: usize, j: usize) -> Option<f64> {
        self.genealogy.as_ref().map(|g| g.distance(i, j))
    }

    pub fn distances(&self) -> Option<DistMatrix> {
        self.genealogy.as_ref().map(Genealogy::to_matrix)
    }

    pub fn is_stopped(&self) -> bool {
        self.stop != StopStatus::None
    }

    pub(crate) fn ensure_running(&self) -> Result<()> {
        if self.is_stopped() {
            Err(Error::Stopped(self.s))
        } else {
            Ok(())
        }
    }

    /// Sets the stop status if the mass has left `(1/M, M)`.
    pub(crate) fn check_band(&mut self, m: f64) -> bool {
        if self.zeta <= 1.0 / m {
            self.stop = StopStatus::HitLower;
        } else if self.zeta >= m {
            self.stop = StopStatus::HitUpper;
        }
        self.is_stopped()
    }
}

pub fn two_type_labels() -> Vec<String> {
    TWO_TYPE_LABELS.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_levels() {
        let g = TypeConfig::new(vec![B, A, B, A], 2).unwrap();
        assert_eq!(g.quantile_level(0.0), 0);
        assert_eq!(g.quantile_level(1.0), 3);
        assert_eq!(g.quantile_level_of_type(0.9, A), Some(3));
        assert_eq!(g.quantile_level_of_type(0.5, A), Some(1));
        assert_eq!(g.quantile_level_of_type(0.0, A), Some(1));
        let mono = TypeConfig::new(vec![B, B], 2).unwrap();
        assert_eq!(mono.quantile_level_of_type(0.3, A), None);
    }

    #[test]
    fn weighted_quantile_skips_zero_weight() {
        let g = TypeConfig::new(vec![B, A, B, A], 2).unwrap();
        let w = [1.0, 0.0];
        assert_eq!(g.quantile_level_weighted(0.0, &w), Some(1));
        assert_eq!(g.quantile_level_weighted(0.5, &w), Some(1));
        assert_eq!(g.quantile_level_weighted(0.51, &w), Some(3));
        assert_eq!(g.quantile_level_weighted(0.5, &[0.0, 0.0]), None);
    }

    #[test]
    fn counts_follow_updates() {
        let mut g = TypeConfig::new(vec![A, B, B], 2).unwrap();
        g.arrow(0, 1);
        assert_eq!(g.types(), &[A, A, B]);
        assert_eq!(g.counts(), &[2, 1]);
        g.set(2, A);
        assert_eq!(g.counts(), &[3, 0]);
        assert!(g.is_monotype());
    }

    #[test]
    fn exact_initial_types_hit_the_frequency() {
        let labels = two_type_labels();
        let t = InitialTypes::exact_two_type(0.25).realize(10, &labels, 3).unwrap();
        let a = t.iter().filter(|&&x| x == A).count();
        assert!(a == 2 || a == 3);
        let t = InitialTypes::exact_two_type(0.5).realize(256, &labels, 3).unwrap();
        assert_eq!(t.iter().filter(|&&x| x == A).count(), 128);
        assert!(InitialTypes::Iid(vec![0.5]).realize(4, &labels, 1).is_err());
        let e = InitialTypes::Explicit(vec!["A".into(), "B".into()]).realize(2, &labels, 1).unwrap();
        assert_eq!(e, vec![A, B]);
        assert!(InitialTypes::Explicit(vec!["C".into()]).realize(1, &labels, 1).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = RunConfig::new(4, 1.0, 1.0, 10.0, 1.0, 1);
        assert!(ok.validate().is_ok());
        assert_eq!(ok.cap(), 100.0);
        let mut bad = ok.clone();
        bad.m = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.v0 = 0.05;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.initial_distances = InitialDistances::Matrix(vec![
            vec![0.0, 2.0, 5.0, 5.0],
            vec![2.0, 0.0, 3.0, 5.0],
            vec![5.0, 3.0, 0.0, 5.0],
            vec![5.0, 5.0, 5.0, 0.0],
        ]);
        assert!(matches!(bad.validate(), Err(Error::NotUltrametric { .. })));
    }
}
