//! Experiment configuration: a TOML file with a versioned schema.
//!
//! Unknown keys anywhere in the file are errors, which catches typos in
//! ablation toggles before they silently change an experiment. The config
//! hash is computed from the canonical serialization of the *parsed*
//! structure, so reordering keys in the file does not change identity.

use std::path::Path;

use serde::{Deserialize, Serialize};

use caf_core::nn::{Activation, AdamParams};
use caf_core::{DistributionSpec, FlowConfig, TrainConfig};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub coupling: CouplingSection,
    #[serde(default)]
    pub reflow: ReflowSection,
    #[serde(default)]
    pub train_velocity: PhaseTrain,
    #[serde(default)]
    pub train_acceleration: AccelerationTrain,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub ablation: AblationToggles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: DistributionSpec,
    pub target: DistributionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
}

impl Default for ModelSection {
    fn default() -> Self {
        // Five hidden layers of 128 units.
        Self {
            hidden_layers: 5,
            hidden_width: 128,
            activation: Activation::Relu,
        }
    }
}

impl ModelSection {
    /// Layer dims for a velocity net over `R^d`: input `[x, t]`.
    pub fn velocity_dims(&self, dim: usize) -> Vec<usize> {
        let mut dims = vec![dim + 1];
        dims.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        dims.push(dim);
        dims
    }

    /// Layer dims for an acceleration net: input `[x, t]` plus the
    /// conditioning velocity when enabled.
    pub fn acceleration_dims(&self, dim: usize, ivc: bool) -> Vec<usize> {
        let mut dims = vec![dim + 1 + if ivc { dim } else { 0 }];
        dims.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        dims.push(dim);
        dims
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    /// Pairs in the stochastic coupling.
    pub n_pairs: usize,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self { n_pairs: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflowSection {
    pub n_pairs: usize,
    pub sim_steps: usize,
}

impl Default for ReflowSection {
    fn default() -> Self {
        Self {
            n_pairs: 4096,
            sim_steps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseTrain {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for PhaseTrain {
    fn default() -> Self {
        Self {
            iterations: 8000,
            batch_size: 128,
            lr: 1e-3,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl PhaseTrain {
    pub fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn train_config(&self, seed: u64, flow: FlowConfig) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch_size: self.batch_size,
            adam: self.adam(),
            seed,
            flow,
            ivc: true,
            teacher_forcing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccelerationTrain {
    #[serde(flatten)]
    pub phase: PhaseTrain,
    /// Condition on the ground-truth velocity target during training rather
    /// than the frozen velocity net's estimate.
    #[serde(default = "default_true")]
    pub teacher_forcing: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AccelerationTrain {
    fn default() -> Self {
        Self {
            phase: PhaseTrain {
                iterations: 16000,
                batch_size: 128,
                lr: 2e-3,
                beta1: default_beta1(),
                beta2: default_beta2(),
                eps: default_eps(),
            },
            teacher_forcing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    /// Endpoints generated for distribution metrics. The step count `N`
    /// comes from `flow.n_steps`.
    pub n_samples: usize,
    /// Paths with full trajectory logs (for CSV export and plots).
    pub n_logged: usize,
    /// Points for the inversion round-trip report.
    pub n_inversion: usize,
    /// Steps used for inversion and reconstruction.
    pub inversion_steps: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            n_logged: 64,
            n_inversion: 1000,
            inversion_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub sw_projections: usize,
    pub nfss_t_grid: usize,
    pub nfss_pairs: usize,
    pub cp_pairs: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            sw_projections: 128,
            nfss_t_grid: 32,
            nfss_pairs: 256,
            cp_pairs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationToggles {
    /// Train the acceleration net (off degenerates to plain rectified flow).
    pub acceleration_on: bool,
    /// Condition the acceleration net on the initial velocity.
    pub ivc_on: bool,
    /// Train on the reflow coupling rather than the stochastic one.
    pub reflow_on: bool,
}

impl Default for AblationToggles {
    fn default() -> Self {
        Self {
            acceleration_on: true,
            ivc_on: true,
            reflow_on: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.dataset
            .source
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.dataset
            .target
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.dataset.source.dim() != self.dataset.target.dim() {
            return Err(CliError::Config(format!(
                "source dim {} != target dim {}",
                self.dataset.source.dim(),
                self.dataset.target.dim()
            )));
        }
        self.flow
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.model.hidden_layers == 0 || self.model.hidden_width == 0 {
            return Err(CliError::Config("model needs hidden layers and width".into()));
        }
        if self.coupling.n_pairs == 0 || self.reflow.n_pairs == 0 {
            return Err(CliError::Config("couplings need at least one pair".into()));
        }
        if !self.ablation.acceleration_on && !self.ablation.ivc_on {
            // Fine: velocity-only pipelines ignore ivc. Nothing to check.
        }
        Ok(())
    }

    /// Canonical 64-bit config hash, stable under key reordering in the file.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
