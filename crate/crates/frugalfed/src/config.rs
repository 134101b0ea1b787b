//! Experiment configuration: parsing (TOML or JSON), defaults, validation,
//! and resolution of derived values.
//!
//! Every behavior-affecting knob lives here, so the config echoed into a
//! report is sufficient to replay the run. Unknown keys are rejected to catch
//! typos early. Validation errors name the offending field.

use serde::{Deserialize, Serialize};

use crate::data::{LabelRule, SyntheticTaskSpec};
use crate::energy::{GridProfile, HardwareProfile};
use crate::error::{Result, SimError};
use crate::model::{weight_name, Activation, ModelSpec};
use crate::partition::DirichletScope;
use crate::rng::SeedTree;

/// Training strategy under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Pool all data on one machine; no federation, no per-round payloads.
    Centralized,
    /// FedAvg over every parameter of the model.
    FedavgFull,
    /// FedAvg over low-rank adapters on a frozen base.
    FedavgLora,
    /// FedAvg over the shared feature stack; heads stay personal.
    PflDecoupled,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Centralized => "centralized",
            Strategy::FedavgFull => "fedavg-full",
            Strategy::FedavgLora => "fedavg-lora",
            Strategy::PflDecoupled => "pfl-decoupled",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centralized" => Ok(Strategy::Centralized),
            "fedavg-full" => Ok(Strategy::FedavgFull),
            "fedavg-lora" => Ok(Strategy::FedavgLora),
            "pfl-decoupled" => Ok(Strategy::PflDecoupled),
            other => Err(SimError::parse(format!(
                "unknown strategy `{other}` (expected centralized, fedavg-full, \
                 fedavg-lora or pfl-decoupled)"
            ))),
        }
    }
}

/// Synthetic-task knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub samples_per_domain: usize,
    pub feature_dim: usize,
    pub domain_separation: f64,
    pub label_rule: LabelRule,
    pub noise_sigma: f64,
    /// Train-side fraction of the label-stratified split.
    pub train_fraction: f64,
    /// Dataset seed; derived from the experiment seed when omitted.
    pub seed: Option<u64>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            samples_per_domain: 2000,
            feature_dim: 6,
            domain_separation: 1.0,
            label_rule: LabelRule::Aligned,
            noise_sigma: 0.25,
            train_fraction: 0.8,
            seed: None,
        }
    }
}

/// Network shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layer widths (1–3 entries; input and the 1-unit output are
    /// added automatically).
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// First dense layer index owned by the personal head under
    /// `pfl-decoupled`.
    pub head_boundary: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![32, 16],
            activation: Activation::Tanh,
            head_boundary: 2,
        }
    }
}

/// Local optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means full-batch gradient descent.
    pub batch_size: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            learning_rate: 0.05,
            epochs: 1,
            batch_size: 0,
        }
    }
}

/// How client shards are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    /// Domain split only.
    Domain,
    /// Dirichlet label skew only.
    Dirichlet,
    /// Domain split with Dirichlet label skew layered inside.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub mode: PartitionMode,
    pub alpha: f64,
    pub scope: DirichletScope,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            mode: PartitionMode::Both,
            alpha: 1.0,
            scope: DirichletScope::WithinDomain,
        }
    }
}

/// Adapter settings (used by `fedavg-lora`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoraConfig {
    pub rank: usize,
    pub scaling: f64,
    pub targets: Vec<String>,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: 8,
            scaling: 32.0,
            targets: vec!["dense1.weight".into()],
        }
    }
}

/// Cost-model and accounting knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    /// Simulated seconds per (thousand parameters × sample processed).
    pub seconds_per_kparam_sample: f64,
    /// Joules per byte moved over the network.
    pub comm_j_per_byte: f64,
    /// Ship the one-time frozen-base broadcast at 4-bit precision
    /// (0.5 bytes/parameter) instead of full precision.
    pub quantized_base_broadcast: bool,
    /// Total upstream pretraining emissions of the reused base model.
    pub pretraining_gco2e: f64,
    /// Fraction of those emissions attributed to this run.
    pub pretraining_fraction: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            seconds_per_kparam_sample: 0.001,
            comm_j_per_byte: 0.0,
            quantized_base_broadcast: false,
            pretraining_gco2e: 0.0,
            pretraining_fraction: 0.0,
        }
    }
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_client_count")]
    pub client_count: usize,
    #[serde(default = "default_client_fraction")]
    pub client_fraction: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Push fresh global parameters to unselected clients every round
    /// (costs download bytes; off by default).
    #[serde(default)]
    pub refresh_unselected: bool,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub lora: LoraConfig,
    #[serde(default)]
    pub hardware: HardwareProfile,
    #[serde(default)]
    pub grid: GridProfile,
    #[serde(default)]
    pub energy: EnergyConfig,
}

fn default_rounds() -> usize {
    20
}
fn default_client_count() -> usize {
    10
}
fn default_client_fraction() -> f64 {
    0.5
}
fn default_patience() -> usize {
    5
}
fn default_seed() -> u64 {
    42
}

impl ExperimentConfig {
    /// A default-valued config for `strategy` (seed 42, 10 clients, 20 rounds).
    pub fn for_strategy(strategy: Strategy) -> Self {
        ExperimentConfig {
            strategy,
            rounds: default_rounds(),
            client_count: default_client_count(),
            client_fraction: default_client_fraction(),
            patience: default_patience(),
            seed: default_seed(),
            refresh_unselected: false,
            task: TaskConfig::default(),
            model: ModelConfig::default(),
            optimizer: OptimizerSettings::default(),
            partition: PartitionConfig::default(),
            lora: LoraConfig::default(),
            hardware: HardwareProfile::default(),
            grid: GridProfile::default(),
            energy: EnergyConfig::default(),
        }
    }

    /// Fill derived values (task seed) and apply an optional seed override,
    /// then validate. The result is self-contained: echoing it and parsing it
    /// back describes the identical run.
    pub fn resolved(mut self, seed_override: Option<u64>) -> Result<Self> {
        if let Some(seed) = seed_override {
            self.seed = seed;
            // An override re-derives the dataset even when the file pinned a
            // task seed, so two overridden runs never share data by accident.
            if self.task.seed.is_some() {
                self.task.seed = None;
            }
        }
        if self.task.seed.is_none() {
            self.task.seed = Some(SeedTree::new(self.seed).branch("task").state());
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        fn err(field: &str, message: impl Into<String>) -> SimError {
            SimError::config(field, message)
        }
        if self.rounds == 0 {
            return Err(err("rounds", "must be at least 1"));
        }
        if self.client_count == 0 {
            return Err(err("client_count", "must be at least 1"));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(err("client_fraction", "must lie in (0, 1]"));
        }
        if self.patience == 0 {
            return Err(err("patience", "must be at least 1"));
        }

        if self.task.samples_per_domain < 2 {
            return Err(err("task.samples_per_domain", "must be at least 2"));
        }
        if self.task.feature_dim < 2 {
            return Err(err("task.feature_dim", "must be at least 2"));
        }
        if !self.task.domain_separation.is_finite() || self.task.domain_separation < 0.0 {
            return Err(err("task.domain_separation", "must be non-negative"));
        }
        if !self.task.noise_sigma.is_finite() || self.task.noise_sigma < 0.0 {
            return Err(err("task.noise_sigma", "must be non-negative"));
        }
        if !(self.task.train_fraction > 0.0 && self.task.train_fraction < 1.0) {
            return Err(err("task.train_fraction", "must lie strictly in (0, 1)"));
        }

        if self.model.hidden.is_empty() || self.model.hidden.len() > 3 {
            return Err(err("model.hidden", "needs 1 to 3 hidden layer widths"));
        }
        if self.model.hidden.iter().any(|&w| w == 0) {
            return Err(err("model.hidden", "widths must be positive"));
        }
        if self.model.head_boundary == 0 || self.model.head_boundary > self.model.hidden.len() {
            return Err(err(
                "model.head_boundary",
                format!(
                    "must lie in 1..={} so the shared stack and the head are both non-empty",
                    self.model.hidden.len()
                ),
            ));
        }

        if !self.optimizer.learning_rate.is_finite() || self.optimizer.learning_rate <= 0.0 {
            return Err(err("optimizer.learning_rate", "must be a positive real"));
        }
        if self.optimizer.epochs == 0 {
            return Err(err("optimizer.epochs", "must be at least 1"));
        }

        if !self.partition.alpha.is_finite() || self.partition.alpha <= 0.0 {
            return Err(err("partition.alpha", "must be a positive real"));
        }
        let uses_domains = matches!(self.partition.mode, PartitionMode::Domain | PartitionMode::Both);
        if self.strategy != Strategy::Centralized && uses_domains && self.client_count % 2 != 0 {
            return Err(err(
                "client_count",
                "domain-based partitioning needs an even client count",
            ));
        }

        if self.strategy == Strategy::FedavgLora {
            if self.lora.rank == 0 {
                return Err(err("lora.rank", "must be at least 1"));
            }
            if !self.lora.scaling.is_finite() || self.lora.scaling <= 0.0 {
                return Err(err("lora.scaling", "must be a positive real"));
            }
            if self.lora.targets.is_empty() {
                return Err(err("lora.targets", "needs at least one weight layer"));
            }
            let arch = self.architecture();
            for target in &self.lora.targets {
                let Some(idx) = (0..arch.len() - 1).find(|&i| weight_name(i) == *target) else {
                    return Err(err(
                        "lora.targets",
                        format!("`{target}` does not name a dense weight layer"),
                    ));
                };
                let cap = arch[idx].min(arch[idx + 1]);
                if self.lora.rank > cap {
                    return Err(err(
                        "lora.rank",
                        format!("rank {} exceeds min dimension {cap} of `{target}`", self.lora.rank),
                    ));
                }
            }
        }

        self.hardware
            .validate()
            .map_err(|e| err("hardware", e.to_string()))?;
        self.grid.validate().map_err(|e| err("grid", e.to_string()))?;

        if !self.energy.seconds_per_kparam_sample.is_finite()
            || self.energy.seconds_per_kparam_sample < 0.0
        {
            return Err(err("energy.seconds_per_kparam_sample", "must be non-negative"));
        }
        if !self.energy.comm_j_per_byte.is_finite() || self.energy.comm_j_per_byte < 0.0 {
            return Err(err("energy.comm_j_per_byte", "must be non-negative"));
        }
        if !self.energy.pretraining_gco2e.is_finite() || self.energy.pretraining_gco2e < 0.0 {
            return Err(err("energy.pretraining_gco2e", "must be non-negative"));
        }
        if !self.energy.pretraining_fraction.is_finite()
            || !(0.0..=1.0).contains(&self.energy.pretraining_fraction)
        {
            return Err(err("energy.pretraining_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Full unit-count chain: input, hidden layers, output.
    pub fn architecture(&self) -> Vec<usize> {
        let mut arch = Vec::with_capacity(self.model.hidden.len() + 2);
        arch.push(self.task.feature_dim);
        arch.extend(&self.model.hidden);
        arch.push(1);
        arch
    }

    /// Materialize the [`ModelSpec`] this config describes.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let targets = if self.strategy == Strategy::FedavgLora {
            self.lora.targets.clone()
        } else {
            Vec::new()
        };
        ModelSpec::new(
            self.architecture(),
            self.model.activation,
            self.model.head_boundary,
            targets,
        )
    }

    /// Materialize the synthetic-task recipe. Requires a resolved config.
    pub fn task_spec(&self) -> Result<SyntheticTaskSpec> {
        let seed = self.task.seed.ok_or_else(|| {
            SimError::usage("task seed not resolved; call resolved() first")
        })?;
        Ok(SyntheticTaskSpec {
            samples_per_domain: self.task.samples_per_domain,
            feature_dim: self.task.feature_dim,
            domain_separation: self.task.domain_separation,
            label_rule: self.task.label_rule,
            noise_sigma: self.task.noise_sigma,
            seed,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| SimError::usage(format!("serialize config: {e}")))
    }
}

/// Parse a config from TOML or JSON text (JSON documents start with `{`).
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| SimError::parse(format!("config json: {e}")))
    } else {
        toml::from_str(text).map_err(|e| SimError::parse(format!("config toml: {e}")))
    }
}
