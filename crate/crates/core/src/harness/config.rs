//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//!
//! [dataset]
//! n_per_class = 8
//! d_side = 8
//!
//! [schedule]
//! steps = 50
//! beta_start = 1e-4
//! beta_end = 0.02
//!
//! [[agents]]
//! spec = { conv = 1, pool = 0, att = 0, bn = 1, dr = 0, skip = 1, wide = 1, deep = 0 }
//! epochs = 2000
//! lr = 0.01
//!
//! [graph]
//! mode = "PER_SAMPLE"
//! tau = 0.01
//! sigma = 0.1
//!
//! [meta]
//! lambda = 0.1
//! gamma = 0.01
//! eta = 0.01
//! epochs = 20
//! k_mst = 1
//! layer_dims = [17, 16, 8]
//! diversity = "agents"
//!
//! [eval]
//! n_generated = 16
//! seeds_for_trends = 5
//! probe_step = 10
//! ```
//!
//! Every section except `seed` may be omitted and falls back to the values
//! above (the four default agents are listed in [`default_agents`]).
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::HarnessError;
use crate::diffusion::{AgentTrainConfig, NoiseSchedule};
use crate::graph::ConnectivityMode;
use crate::meta::{DiversityMode, MetaConfig};
use crate::spec::AgentSpec;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_agents")]
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub meta: MetaSection,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_per_class: usize,
    pub d_side: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_per_class: 8,
            d_side: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: 50,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// Trait name to 0/1 flag; all eight traits are required.
    pub spec: BTreeMap<String, i64>,
    #[serde(default = "default_agent_epochs")]
    pub epochs: usize,
    #[serde(default = "default_agent_lr")]
    pub lr: f64,
}

/// Longer than [`AgentTrainConfig`]'s default; ensemble comparisons need
/// well-fitted agents.
fn default_agent_epochs() -> usize {
    2000
}

fn default_agent_lr() -> f64 {
    AgentTrainConfig::default().lr
}

impl AgentConfig {
    fn from_bits(bits: &str) -> Self {
        let spec: AgentSpec = bits.parse().expect("valid default spec");
        AgentConfig {
            spec: spec
                .iter()
                .map(|(t, v)| (t.name().to_string(), i64::from(v)))
                .collect(),
            epochs: default_agent_epochs(),
            lr: default_agent_lr(),
        }
    }
}

/// Four agents with distinct trait maps and comparable quality: all wide
/// with a skip path, two of them deep.
pub fn default_agents() -> Vec<AgentConfig> {
    ["10010110", "11000111", "00100110", "10100111"]
        .into_iter()
        .map(AgentConfig::from_bits)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    /// `CCF`, `PCF`, `HYBRID` or `PER_SAMPLE`.
    pub mode: String,
    pub tau: f64,
    pub sigma: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            mode: ConnectivityMode::PerSample.name().to_string(),
            tau: 0.01,
            sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaSection {
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
    pub epochs: usize,
    pub k_mst: usize,
    pub layer_dims: Vec<usize>,
    /// `agents` or `weighted`.
    pub diversity: String,
}

impl Default for MetaSection {
    fn default() -> Self {
        let d = MetaConfig::default();
        MetaSection {
            lambda: d.lambda,
            gamma: d.gamma,
            eta: d.eta,
            epochs: d.epochs,
            k_mst: d.k_mst,
            layer_dims: d.dims,
            diversity: d.diversity.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Images generated per class.
    pub n_generated: usize,
    pub seeds_for_trends: usize,
    /// Diffusion step at which one-shot outputs are probed for the
    /// knowledge base and reconstruction error; defaults to `steps / 5`.
    pub probe_step: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_generated: 16,
            seeds_for_trends: 5,
            probe_step: None,
        }
    }
}

impl ExperimentConfig {
    /// Default sections with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            dataset: DatasetConfig::default(),
            schedule: ScheduleConfig::default(),
            agents: default_agents(),
            graph: GraphConfig::default(),
            meta: MetaSection::default(),
            eval: EvalConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                HarnessError::MissingInput {
                    path: path.to_path_buf(),
                    hint: "pass an existing file to --config",
                }
            } else {
                HarnessError::Io {
                    path: path.to_path_buf(),
                    source,
                }
            }
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks every section against the owning module's constraints.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.dataset.n_per_class == 0 {
            return Err(HarnessError::Config(
                "dataset.n_per_class must be at least 1".into(),
            ));
        }
        if self.dataset.d_side < 8 {
            return Err(HarnessError::Config(format!(
                "dataset.d_side must be at least 8, got {}",
                self.dataset.d_side
            )));
        }
        self.noise_schedule()?;
        let steps = self.schedule.steps;
        let probe = self.probe_step();
        if probe == 0 || probe > steps {
            return Err(HarnessError::Config(format!(
                "eval.probe_step must be in 1..={steps}, got {probe}"
            )));
        }
        if self.agents.is_empty() {
            return Err(HarnessError::Config(
                "at least one agent is required".into(),
            ));
        }
        self.agent_specs()?;
        for (i, a) in self.agents.iter().enumerate() {
            if a.epochs == 0 || !(a.lr > 0.0 && a.lr.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "agents[{i}]: epochs must be positive and lr a positive number"
                )));
            }
        }
        self.connectivity()?;
        let mc = self.meta_config()?;
        mc.validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if mc.tau <= 0.0 || !mc.tau.is_finite() {
            return Err(HarnessError::Config(format!(
                "graph.tau must be positive, got {}",
                mc.tau
            )));
        }
        if self.eval.seeds_for_trends == 0 {
            return Err(HarnessError::Config(
                "eval.seeds_for_trends must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule, HarnessError> {
        let s = &self.schedule;
        NoiseSchedule::linear(s.steps, s.beta_start, s.beta_end)
            .map_err(|e| HarnessError::Config(format!("schedule: {e}")))
    }

    pub fn probe_step(&self) -> usize {
        self.eval
            .probe_step
            .unwrap_or((self.schedule.steps / 5).max(1))
    }

    pub fn agent_specs(&self) -> Result<Vec<AgentSpec>, HarnessError> {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                AgentSpec::from_named(a.spec.iter().map(|(k, v)| (k.as_str(), *v)))
                    .map_err(|e| HarnessError::Config(format!("agents[{i}].spec: {e}")))
            })
            .collect()
    }

    pub fn agent_train_config(&self, agent: usize) -> AgentTrainConfig {
        AgentTrainConfig {
            epochs: self.agents[agent].epochs,
            lr: self.agents[agent].lr,
        }
    }

    pub fn connectivity(&self) -> Result<ConnectivityMode, HarnessError> {
        self.graph
            .mode
            .parse()
            .map_err(|e| HarnessError::Config(format!("graph.mode: {e}")))
    }

    pub fn diversity_mode(&self) -> Result<DiversityMode, HarnessError> {
        self.meta
            .diversity
            .parse()
            .map_err(|e| HarnessError::Config(format!("meta.diversity: {e}")))
    }

    pub fn meta_config(&self) -> Result<MetaConfig, HarnessError> {
        Ok(MetaConfig {
            lambda: self.meta.lambda,
            gamma: self.meta.gamma,
            eta: self.meta.eta,
            epochs: self.meta.epochs,
            k_mst: self.meta.k_mst,
            sigma: self.graph.sigma,
            dims: self.meta.layer_dims.clone(),
            diversity: self.diversity_mode()?,
            connectivity: self.connectivity()?,
            tau: self.graph.tau,
            loss_window: MetaConfig::default().loss_window,
        })
    }
}
