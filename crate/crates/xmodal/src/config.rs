//! The single JSON run configuration consumed by the CLI. Every section is
//! optional and falls back to documented defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive::ContrastiveConfig;
use crate::data::{GeneratorConfig, LanguageSets};
use crate::downstream::DownstreamConfig;
use crate::evalkit::Ablation;
use crate::trainer::TrainConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse failure: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported config schema {got}, expected {expected}")]
    Schema { got: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub sets: LanguageSets,
    /// Ablations scored per protocol cell, in report order.
    pub ablations: Vec<Ablation>,
    /// Cross-set cells evaluate on the target set's full data instead of its
    /// test split only.
    pub eval_full_target: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            sets: LanguageSets::default(),
            ablations: vec![Ablation::Multimodal, Ablation::TextOnly, Ablation::AudioOnly],
            eval_full_target: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default)]
    pub data: GeneratorConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub contrastive: ContrastiveConfig,
    #[serde(default)]
    pub downstream: DownstreamConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: CONFIG_SCHEMA_VERSION,
            data: GeneratorConfig::default(),
            train: TrainConfig::default(),
            contrastive: ContrastiveConfig::default(),
            downstream: DownstreamConfig::default(),
            protocol: ProtocolConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path)?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(raw)?;
        if cfg.schema != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                got: cfg.schema,
                expected: CONFIG_SCHEMA_VERSION,
            });
        }
        Ok(cfg)
    }
}
