use std::path::Path;

use anyhow::{bail, Context};
use lookdown_core::lookdown::RunConfig;
use lookdown_core::multitype::MultitypeModel;
use lookdown_core::sde::DirectConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Direct,
    Lookdown,
    Multitype,
    ProjectCompare,
    Mgtest,
    ExportTree,
    Fragments,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Direct => "direct",
            Mode::Lookdown => "lookdown",
            Mode::Multitype => "multitype",
            Mode::ProjectCompare => "project-compare",
            Mode::Mgtest => "mgtest",
            Mode::ExportTree => "export-tree",
            Mode::Fragments => "fragments",
        }
    }
}

fn default_replicas() -> usize {
    1
}

fn default_sigmas() -> f64 {
    3.0
}

fn default_dt_t() -> f64 {
    1e-3
}

fn default_start() -> f64 {
    0.1
}

fn default_trace() -> usize {
    1
}

/// Projection comparison against the direct integrator at original time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectSpec {
    pub t: f64,
    /// Level counts to compare; the run's `n_levels` when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<usize>,
    /// Step of the direct integrator.
    #[serde(default = "default_dt_t")]
    pub dt_t: f64,
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgtestSpec {
    /// Built-in test functions by name.
    pub functions: Vec<String>,
    pub delta: f64,
    /// Lookdown time at which the residual window opens.
    #[serde(default = "default_start")]
    pub start_s: f64,
    /// Ramp width of the mass window; `0.05 (M - 1/M)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_width: Option<f64>,
}

/// A time on either clock.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum At {
    S(f64),
    T(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub at: At,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragmentSpec {
    pub window_end: f64,
    pub probes: Vec<f64>,
}

/// Contents of an experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub mode: Mode,
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct: Option<DirectConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<MultitypeModel>,
    /// Probe times on the lookdown clock.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs_s: Vec<f64>,
    /// Probe times on the original clock.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs_t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<ProjectSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mgtest: Option<MgtestSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragments: Option<FragmentSpec>,
    /// Replicas whose events and full states are written out.
    #[serde(default = "default_trace")]
    pub trace_replicas: usize,
}

impl Experiment {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let exp: Experiment = lookdown_core::from_json_strict(text)?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The run section with the experiment seed filled in.
    pub fn run_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = self.run.clone().with_context(|| format!("mode {} needs a \"run\" section", self.mode.as_str()))?;
        cfg.seed = self.seed;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.replicas < 1 {
            bail!("replicas must be >= 1");
        }
        let need = |present: bool, key: &str| -> anyhow::Result<()> {
            if !present {
                bail!("mode {} needs a \"{key}\" section", self.mode.as_str());
            }
            Ok(())
        };
        match self.mode {
            Mode::Direct => {
                need(self.direct.is_some(), "direct")?;
                self.direct.as_ref().unwrap().validate()?;
            }
            Mode::Multitype => {
                need(self.model.is_some(), "model")?;
                self.model.as_ref().unwrap().validate()?;
            }
            Mode::ProjectCompare => need(self.project.is_some(), "project")?,
            Mode::Mgtest => {
                need(self.mgtest.is_some(), "mgtest")?;
                if self.replicas < 2 {
                    bail!("mgtest needs at least two replicas");
                }
            }
            Mode::ExportTree => need(self.tree.is_some(), "tree")?,
            Mode::Fragments => need(self.fragments.is_some(), "fragments")?,
            Mode::Lookdown => {}
        }
        if self.mode != Mode::Direct {
            need(self.run.is_some(), "run")?;
            self.run_config()?.validate()?;
        }
        if !self.outputs_s.is_empty() && !self.outputs_t.is_empty() {
            bail!("give probe times on one clock only (outputs_s or outputs_t)");
        }
        for w in [&self.outputs_s, &self.outputs_t] {
            if w.windows(2).any(|p| !(p[0] <= p[1])) || w.iter().any(|x| !(*x >= 0.0)) {
                bail!("probe times must be nonnegative and sorted");
            }
        }
        Ok(())
    }
}
