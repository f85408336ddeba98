//! Integrators for the two timescales.
//!
//! Original time `t`: the two-type diffusion
//! `dxA = (b xA - c xA xB) dt + sqrt(xA) dWA`,
//! `dxB = -c xA xB dt + sqrt(xB) dWB`, integrated with Euler-Maruyama and
//! clamped at the absorbing state 0.
//!
//! Lookdown time `s`: the total mass `dz = f(z, p) z ds + z dW` with
//! `f(v, p) = b p v - 2 c p (1 - p) v^2`, integrated on the log scale so that
//! positivity is structural. The clocks are linked by `t(s) = int_0^s z du`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::{stream_rng, StreamKind};

/// Per-capita drift `f(v, p)` of the total mass.
pub fn drift_total_mass(v: f64, mu_a: f64, b: f64, c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&mu_a) {
        return Err(invalid(format!("type frequency must lie in [0, 1], got {mu_a}")));
    }
    Ok(mass_drift(v, mu_a, b, c))
}

#[inline]
pub(crate) fn mass_drift(v: f64, mu_a: f64, b: f64, c: f64) -> f64 {
    b * mu_a * v - 2.0 * c * mu_a * (1.0 - mu_a) * v * v
}

/// `f` evaluated at `v` clamped to `[1/M, M]`.
pub fn drift_total_mass_truncated(v: f64, mu_a: f64, b: f64, c: f64, m: f64) -> Result<f64> {
    if !(m > 1.0) {
        return Err(invalid(format!("truncation bound M must exceed 1, got {m}")));
    }
    drift_total_mass(v.clamp(1.0 / m, m), mu_a, b, c)
}

/// One exponential-Euler step of `ln z`: `d ln z = (f - 1/2) ds + dW`.
pub fn step_log_mass(zeta: f64, mu_a: f64, dt_s: f64, dw: f64, b: f64, c: f64) -> f64 {
    debug_assert!(zeta > 0.0);
    zeta * ((mass_drift(zeta, mu_a, b, c) - 0.5) * dt_s + dw).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectConfig {
    pub xa0: f64,
    pub xb0: f64,
    pub b: f64,
    pub c: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Multiplier on the Brownian increments; 1 for the actual SDE.
    #[serde(default = "one")]
    pub noise: f64,
}

fn one() -> f64 {
    1.0
}

impl DirectConfig {
    pub fn new(xa0: f64, xb0: f64, b: f64, c: f64, dt: f64, horizon: f64) -> Self {
        Self { xa0, xb0, b, c, dt, horizon, noise: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xa0 >= 0.0) || !(self.xb0 >= 0.0) {
            return Err(invalid(format!("initial masses must be >= 0, got ({}, {})", self.xa0, self.xb0)));
        }
        if !(self.b >= 0.0) || !(self.c >= 0.0) {
            return Err(invalid("b and c must be >= 0"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0) {
            return Err(invalid(format!("horizon must be >= 0, got {}", self.horizon)));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Euler-Maruyama path on the grid `k * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectPath {
    pub times_t: Vec<f64>,
    pub xi_a: Vec<f64>,
    pub xi_b: Vec<f64>,
}

impl DirectPath {
    pub fn last(&self) -> (f64, f64) {
        (*self.xi_a.last().expect("nonempty path"), *self.xi_b.last().expect("nonempty path"))
    }

    /// Index of the grid point closest to `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let dt = if self.times_t.len() > 1 { self.times_t[1] - self.times_t[0] } else { 1.0 };
        ((t / dt).round() as usize).min(self.times_t.len() - 1)
    }
}

/// Streams the Euler path to `visit(k, t, xa, xb)` without storing it.
pub fn simulate_direct_with<F>(cfg: &DirectConfig, seed: u64, mut visit: F) -> Result<()>
where
    F: FnMut(usize, f64, f64, f64),
{
    cfg.validate()?;
    let mut rng_a = stream_rng(seed, StreamKind::DirectA, 0);
    let mut rng_b = stream_rng(seed, StreamKind::DirectB, 0);
    let sqdt = cfg.dt.sqrt() * cfg.noise;
    let (mut xa, mut xb) = (cfg.xa0, cfg.xb0);
    visit(0, 0.0, xa, xb);
    for k in 1..=cfg.n_steps() {
        let za: f64 = StandardNormal.sample(&mut rng_a);
        let zb: f64 = StandardNormal.sample(&mut rng_b);
        // 0 is absorbing for both components.
        let na = if xa > 0.0 {
            (xa + (cfg.b * xa - cfg.c * xa * xb) * cfg.dt + xa.sqrt() * sqdt * za).max(0.0)
        } else {
            0.0
        };
        let nb = if xb > 0.0 { (xb - cfg.c * xb * xa * cfg.dt + xb.sqrt() * sqdt * zb).max(0.0) } else { 0.0 };
        xa = na;
        xb = nb;
        visit(k, k as f64 * cfg.dt, xa, xb);
    }
    Ok(())
}

pub fn simulate_direct(cfg: &DirectConfig, seed: u64) -> Result<DirectPath> {
    cfg.validate()?;
    let n = cfg.n_steps() + 1;
    let mut path = DirectPath {
        times_t: Vec::with_capacity(n),
        xi_a: Vec::with_capacity(n),
        xi_b: Vec::with_capacity(n),
    };
    simulate_direct_with(cfg, seed, |_, t, a, b| {
        path.times_t.push(t);
        path.xi_a.push(a);
        path.xi_b.push(b);
    })?;
    Ok(path)
}

/// Total mass on a lookdown-time grid together with the accumulated original
/// time `t(s) = int_0^s zeta du`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MassPath {
    pub times_s: Vec<f64>,
    pub zeta: Vec<f64>,
    pub times_t: Vec<f64>,
}

impl MassPath {
    pub fn new(times_s: Vec<f64>, zeta: Vec<f64>) -> Result<Self> {
        if times_s.len() != zeta.len() || times_s.is_empty() {
            return Err(invalid("mass path needs matching, nonempty time and value vectors"));
        }
        if times_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("lookdown times must be strictly increasing"));
        }
        Ok(Self { times_s, zeta, times_t: Vec::new() })
    }

    pub fn push(&mut self, s: f64, zeta: f64, t: f64) {
        self.times_s.push(s);
        self.zeta.push(zeta);
        self.times_t.push(t);
    }

    pub fn horizon_t(&self) -> f64 {
        self.times_t.last().copied().unwrap_or(0.0)
    }
}

/// Fills `times_t` by the trapezoidal rule.
pub fn time_change(mut mass: MassPath) -> MassPath {
    let mut t = Vec::with_capacity(mass.times_s.len());
    let mut acc = 0.0;
    t.push(0.0);
    for k in 1..mass.times_s.len() {
        acc += 0.5 * (mass.zeta[k - 1] + mass.zeta[k]) * (mass.times_s[k] - mass.times_s[k - 1]);
        t.push(acc);
    }
    mass.times_t = t;
    mass
}

/// The lookdown time `s` with `t(s) = t`, by linear interpolation of the
/// monotone map between grid points.
pub fn invert_time(mass: &MassPath, t: f64) -> Result<f64> {
    let tt = &mass.times_t;
    if tt.len() != mass.times_s.len() || tt.is_empty() {
        return Err(invalid("mass path has no time change; call time_change first"));
    }
    let last = *tt.last().expect("nonempty");
    if !(t >= 0.0 && t <= last) {
        return Err(Error::OutOfRange(format!("t = {t} outside [0, {last}]")));
    }
    // first index with times_t >= t
    let k = tt.partition_point(|&x| x < t);
    if k == 0 {
        return Ok(mass.times_s[0]);
    }
    let (t0, t1) = (tt[k - 1], tt[k]);
    let (s0, s1) = (mass.times_s[k - 1], mass.times_s[k]);
    if t1 == t0 {
        return Ok(s0);
    }
    Ok(s0 + (t - t0) / (t1 - t0) * (s1 - s0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn drift_examples() {
        assert!(close(drift_total_mass(2.0, 0.5, 1.0, 1.0).unwrap(), -1.0, 1e-15));
        assert_eq!(drift_total_mass(5.0, 0.0, 3.0, 7.0).unwrap(), 0.0);
        assert_eq!(drift_total_mass(5.0, 0.3, 0.0, 0.0).unwrap(), 0.0);
        assert!(drift_total_mass(1.0, 1.5, 1.0, 1.0).is_err());
        assert!(drift_total_mass(1.0, -0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn truncated_drift_examples() {
        assert!(close(drift_total_mass_truncated(1000.0, 0.5, 1.0, 0.0, 10.0).unwrap(), 5.0, 1e-15));
        assert!(close(drift_total_mass_truncated(1e-9, 1.0, 2.0, 0.0, 4.0).unwrap(), 0.5, 1e-15));
        let inside = drift_total_mass_truncated(3.0, 0.2, 1.0, 0.3, 10.0).unwrap();
        assert_eq!(inside, drift_total_mass(3.0, 0.2, 1.0, 0.3).unwrap());
        assert!(drift_total_mass_truncated(1.0, 0.5, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn log_mass_examples() {
        assert!(close(step_log_mass(1.0, 0.7, 0.1, 0.05, 0.0, 0.0), 1.0, 1e-15));
        assert_eq!(step_log_mass(3.0, 0.2, 0.0, 0.0, 1.0, 1.0), 3.0);
        let expected = 2.0 * (0.5f64 * 0.01).exp();
        assert!(close(step_log_mass(2.0, 0.5, 0.01, 0.0, 1.0, 0.0), expected, 1e-14));
        assert!(close(expected, 2.01003, 1e-5));
    }

    #[test]
    fn direct_trivial_paths() {
        let zero = simulate_direct(&DirectConfig::new(0.0, 0.0, 1.0, 1.0, 0.01, 1.0), 5).unwrap();
        assert!(zero.xi_a.iter().chain(&zero.xi_b).all(|&x| x == 0.0));

        let mut frozen = DirectConfig::new(1.5, 0.5, 0.0, 0.0, 0.01, 1.0);
        frozen.noise = 0.0;
        let p = simulate_direct(&frozen, 5).unwrap();
        assert!(p.xi_a.iter().all(|&x| x == 1.5));
        assert!(p.xi_b.iter().all(|&x| x == 0.5));
        assert_eq!(p.times_t.len(), 101);

        assert!(simulate_direct(&DirectConfig::new(-1.0, 0.0, 0.0, 0.0, 0.01, 1.0), 5).is_err());
        assert!(simulate_direct(&DirectConfig::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0), 5).is_err());
    }

    #[test]
    fn direct_absorption_is_permanent() {
        let cfg = DirectConfig::new(0.05, 0.05, 0.0, 1.0, 1e-3, 5.0);
        for seed in 0..20 {
            let p = simulate_direct(&cfg, seed).unwrap();
            for x in [&p.xi_a, &p.xi_b] {
                if let Some(k) = x.iter().position(|&v| v == 0.0) {
                    assert!(x[k..].iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn time_change_examples() {
        let unit = time_change(MassPath::new(vec![0.0, 0.5, 1.0], vec![1.0; 3]).unwrap());
        assert_eq!(unit.times_t, vec![0.0, 0.5, 1.0]);
        assert_eq!(invert_time(&unit, 0.3).unwrap(), 0.3);

        let two = time_change(MassPath::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![2.0; 5]).unwrap());
        assert_eq!(two.horizon_t(), 2.0);
        assert!(close(invert_time(&two, 1.0).unwrap(), 0.5, 1e-15));
        assert!(invert_time(&two, 2.5).is_err());
        assert!(invert_time(&two, -0.1).is_err());
    }
}
