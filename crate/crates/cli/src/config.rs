//! Experiment configuration: one JSON document shared by all subcommands,
//! with command-specific sections resolved lazily so a single file can drive
//! a whole pipeline.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use dagvae_core::model::ModelDims;
use dagvae_core::synth::SyntheticTarget;
use dagvae_core::SearchSpaceSpec;

use crate::CliError;

/// Enumeration guard when a command materializes the whole space.
pub const DEFAULT_ENUMERATION_BUDGET: usize = 1_000_000;

#[derive(Debug, Deserialize)]
pub struct ExperimentConfig {
    /// Mandatory: no wall-clock seeding anywhere.
    pub seed: u64,
    pub space: SpaceSection,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub enumeration_budget: Option<usize>,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub metrics: Option<MetricsSection>,
    #[serde(default)]
    pub finetune: Option<FinetuneSection>,
    #[serde(default)]
    pub bo: Option<BoSection>,
    #[serde(default)]
    pub extrapolate: Option<ExtrapolateSection>,
    #[serde(default)]
    pub walk: Option<WalkSection>,
}

/// Either a named preset or a fully custom space definition.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum SpaceSection {
    Preset {
        preset: String,
        #[serde(default)]
        max_nodes: Option<usize>,
    },
    Custom {
        custom: SearchSpaceSpec,
    },
}

#[derive(Debug, Deserialize)]
pub struct DataSection {
    /// JSON-lines record file (one graph per line, optional metrics).
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_d_node")]
    pub d_node: usize,
    #[serde(default = "default_d_z")]
    pub d_z: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
}

fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}
fn default_alpha() -> f64 {
    0.005
}
fn default_test_fraction() -> f64 {
    0.1
}
fn default_d_node() -> usize {
    125
}
fn default_d_z() -> usize {
    56
}
fn default_rounds() -> usize {
    2
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            alpha: default_alpha(),
            test_fraction: default_test_fraction(),
            d_node: default_d_node(),
            d_z: default_d_z(),
            rounds: default_rounds(),
        }
    }
}

impl TrainSection {
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            d_node: self.d_node,
            d_z: self.d_z,
            rounds: self.rounds,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct MetricsSection {
    #[serde(default = "default_n_z")]
    pub n_z: usize,
    #[serde(default = "default_n_decode")]
    pub n_decode: usize,
    #[serde(default = "default_n_prior")]
    pub n_prior: usize,
}

fn default_n_z() -> usize {
    10
}
fn default_n_decode() -> usize {
    10
}
fn default_n_prior() -> usize {
    1000
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            n_z: default_n_z(),
            n_decode: default_n_decode(),
            n_prior: default_n_prior(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct FinetuneSection {
    #[serde(default = "default_ft_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Share of the dataset used as labeled fine-tuning data.
    #[serde(default = "default_label_fraction")]
    pub label_fraction: f64,
    /// Synthetic target used when the dataset lines carry no metrics.
    #[serde(default)]
    pub target: Option<String>,
}

fn default_ft_epochs() -> usize {
    100
}
fn default_label_fraction() -> f64 {
    0.1
}

impl Default for FinetuneSection {
    fn default() -> Self {
        FinetuneSection {
            epochs: default_ft_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            label_fraction: default_label_fraction(),
            target: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct BoSection {
    #[serde(default = "default_bo_iterations")]
    pub iterations: usize,
    #[serde(default = "default_bo_batch")]
    pub batch_size: usize,
    #[serde(default = "default_seed_count")]
    pub seed_count: usize,
    #[serde(default = "default_m_inducing")]
    pub m_inducing: usize,
    #[serde(default = "default_opt_iters")]
    pub opt_iters: usize,
    #[serde(default = "default_prior_pool")]
    pub prior_pool: usize,
    #[serde(default)]
    pub target: Option<String>,
}

fn default_bo_iterations() -> usize {
    10
}
fn default_bo_batch() -> usize {
    50
}
fn default_seed_count() -> usize {
    5
}
fn default_m_inducing() -> usize {
    500
}
fn default_opt_iters() -> usize {
    40
}
fn default_prior_pool() -> usize {
    200
}

impl Default for BoSection {
    fn default() -> Self {
        BoSection {
            iterations: default_bo_iterations(),
            batch_size: default_bo_batch(),
            seed_count: default_seed_count(),
            m_inducing: default_m_inducing(),
            opt_iters: default_opt_iters(),
            prior_pool: default_prior_pool(),
            target: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExtrapolateSection {
    /// Inline JSON record of the seed graph (same format as data lines).
    #[serde(default)]
    pub seed_record: Option<serde_json::Value>,
    /// Alternatively, a file whose first line is the seed record.
    #[serde(default)]
    pub seed_path: Option<PathBuf>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_top_k() -> usize {
    usize::MAX
}

#[derive(Debug, Clone, Deserialize)]
pub struct WalkSection {
    #[serde(default = "default_walk_points")]
    pub n_points: usize,
    #[serde(default = "default_walk_radius")]
    pub radius: f64,
}

fn default_walk_points() -> usize {
    14
}
fn default_walk_radius() -> f64 {
    3.0
}

impl Default for WalkSection {
    fn default() -> Self {
        WalkSection {
            n_points: default_walk_points(),
            radius: default_walk_radius(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates the config; every failure here is a config
    /// error (exit code 1).
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?;
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        cfg.space()?; // fail fast on unknown presets
        if let Some(data) = &cfg.data {
            if !data.path.exists() {
                return Err(CliError::Config(format!(
                    "data file {} does not exist",
                    data.path.display()
                )));
            }
        }
        Ok(cfg)
    }

    pub fn space(&self) -> Result<SearchSpaceSpec, CliError> {
        match &self.space {
            SpaceSection::Custom { custom } => Ok(custom.clone()),
            SpaceSection::Preset { preset, max_nodes } => match preset.as_str() {
                "mini" => Ok(SearchSpaceSpec::mini(max_nodes.unwrap_or(5))),
                "nb101" => Ok(SearchSpaceSpec::nb101_like()),
                "nb201" => Ok(SearchSpaceSpec::nb201_like()),
                "enas" => Ok(SearchSpaceSpec::enas_like()),
                other => Err(CliError::Config(format!(
                    "unknown space preset {other:?} (expected mini, nb101, nb201, or enas)"
                ))),
            },
        }
    }

    pub fn budget(&self) -> usize {
        self.enumeration_budget.unwrap_or(DEFAULT_ENUMERATION_BUDGET)
    }

    pub fn checkpoint_path(&self) -> Result<&Path, CliError> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| CliError::Config("config needs a \"checkpoint\" path".into()))
    }

    pub fn synth_target(&self, name: &Option<String>) -> Result<SyntheticTarget, CliError> {
        match name.as_deref() {
            None => Ok(SyntheticTarget::Depth),
            Some(n) => SyntheticTarget::parse(n).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown synthetic target {n:?} (expected depth or edge-density)"
                ))
            }),
        }
    }
}
