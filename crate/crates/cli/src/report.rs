use lookdown_core::stats::{mean_se, MomentTest};
use serde::{Deserialize, Serialize};

/// One reported statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

impl StatReport {
    /// Mean and standard error of `xs`, no target.
    pub fn mean(name: impl Into<String>, xs: &[f64]) -> Self {
        let (estimate, se) = mean_se(xs);
        Self { name: name.into(), estimate, se, target: None, pass: None }
    }

    pub fn from_test(name: impl Into<String>, t: &MomentTest) -> Self {
        Self { name: name.into(), estimate: t.mean, se: t.se, target: Some(t.target), pass: Some(t.pass) }
    }

    /// A yes/no check reported as the fraction of passing cases.
    pub fn check(name: impl Into<String>, passed: usize, total: usize) -> Self {
        let frac = if total == 0 { 1.0 } else { passed as f64 / total as f64 };
        Self { name: name.into(), estimate: frac, se: 0.0, target: Some(1.0), pass: Some(passed == total) }
    }
}

/// Everything a run reports; written as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: String,
    pub seed: u64,
    pub replicas: usize,
    pub stats: Vec<StatReport>,
}

impl Report {
    pub fn new(mode: &str, seed: u64, replicas: usize) -> Self {
        Self { mode: mode.to_string(), seed, replicas, stats: Vec::new() }
    }

    pub fn push(&mut self, s: StatReport) {
        self.stats.push(s);
    }

    /// True unless some statistic carries a failing pass flag.
    pub fn all_pass(&self) -> bool {
        self.stats.iter().all(|s| s.pass != Some(false))
    }

    pub fn failures(&self) -> impl Iterator<Item = &StatReport> {
        self.stats.iter().filter(|s| s.pass == Some(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flags_combine() {
        let mut r = Report::new("direct", 1, 2);
        r.push(StatReport::mean("x", &[1.0, 3.0]));
        assert!(r.all_pass());
        assert_eq!(r.stats[0].estimate, 2.0);
        r.push(StatReport::check("c", 3, 4));
        assert!(!r.all_pass());
        assert_eq!(r.failures().count(), 1);
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("\"target\":null"));
    }
}
