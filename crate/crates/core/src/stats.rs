//! Ensemble statistics: means with standard errors, z-tests and
//! Kolmogorov-Smirnov tests.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Smallest sample accepted by the hypothesis tests.
pub const MIN_TEST_SAMPLES: usize = 30;

/// Streaming mean and variance (Welford). `merge` is associative, so partial
/// results from parallel workers combine in any grouping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        RunningStats { n, mean, m2 }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 for fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// `(mean, standard error)` of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let s: RunningStats = xs.iter().copied().collect();
    (s.mean(), s.se())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov distribution tail `Q(lambda) = P(K > lambda)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn p_from_d(d: f64, en: f64) -> f64 {
    kolmogorov_q((en + 0.12 + 0.11 / en) * d)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(invalid("samples contain NaN"));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn check_size(n: usize) -> Result<()> {
    if n < MIN_TEST_SAMPLES {
        return Err(invalid(format!("need at least {MIN_TEST_SAMPLES} samples, got {n}")));
    }
    Ok(())
}

/// Two-sample Kolmogorov-Smirnov test. Tied values are stepped over together,
/// so identical samples give a statistic of exactly 0.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    check_size(a.len())?;
    check_size(b.len())?;
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    Ok(KsResult { statistic: d, p_value: p_from_d(d, en) })
}

/// Same as [`ks_two_sample`].
pub fn compare_distributions(a: &[f64], b: &[f64]) -> Result<KsResult> {
    ks_two_sample(a, b)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<KsResult> {
    check_size(xs.len())?;
    let v = sorted(xs)?;
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (k, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - k as f64 / n).max((k + 1) as f64 / n - f);
    }
    Ok(KsResult { statistic: d, p_value: p_from_d(d, n.sqrt()) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTest {
    pub mean: f64,
    pub se: f64,
    pub target: f64,
    /// `(mean - target) / se`.
    pub z: f64,
    pub pass: bool,
}

/// Passes when the sample mean lies within `sigmas` standard errors of
/// `target`.
pub fn moment_test(xs: &[f64], target: f64, sigmas: f64) -> Result<MomentTest> {
    check_size(xs.len())?;
    let (mean, se) = mean_se(xs);
    let z = if se > 0.0 {
        (mean - target) / se
    } else if mean == target {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MomentTest { mean, se, target, z, pass: z.abs() <= sigmas })
}

/// Compares the means of two independent samples within `sigmas` combined
/// standard errors.
pub fn two_sample_moment_test(a: &[f64], b: &[f64], sigmas: f64) -> Result<MomentTest> {
    check_size(a.len())?;
    check_size(b.len())?;
    let (ma, sa) = mean_se(a);
    let (mb, sb) = mean_se(b);
    let se = (sa * sa + sb * sb).sqrt();
    let diff = ma - mb;
    let z = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MomentTest { mean: diff, se, target: 0.0, z, pass: z.abs() <= sigmas })
}
