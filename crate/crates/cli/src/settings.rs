//! Run configuration: TOML file, then command-line overrides.

use std::path::Path;

use entgen::analysis::DEFAULT_DICE_THRESHOLD;
use entgen::decode::Strategy;
use entgen::evalharness::DEFAULT_CONDITIONS;
use entgen::models::Variant;
use entgen::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = concat!("entgen ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    pub train_fraction: f64,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub min_freq: u64,
    /// Collapse records sharing premise and image into one reference group.
    pub merge_references: bool,
}

impl Default for DataSettings {
    fn default() -> Self {
        DataSettings {
            train_fraction: 0.8,
            dev_fraction: 0.1,
            test_fraction: 0.1,
            split_seed: 13,
            min_freq: 10,
            merge_references: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub variant: Variant,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub image_proj_dim: usize,
    pub max_decode_len: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            variant: Variant::Merge,
            embed_dim: 256,
            hidden_dim: 256,
            image_proj_dim: 256,
            max_decode_len: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub init_scale: f64,
    /// Keep the epoch with the lowest dev perplexity; otherwise keep the last
    /// epoch and skip dev evaluation.
    pub select_best_dev: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 30,
            batch_size: 32,
            lr: 1e-4,
            seed: 1,
            init_scale: 0.08,
            select_best_dev: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSettings {
    /// 0 selects greedy decoding.
    pub beam: usize,
    pub max_len: usize,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        DecodeSettings { beam: 0, max_len: 30 }
    }
}

impl DecodeSettings {
    pub fn strategy(&self) -> Strategy {
        match self.beam {
            0 => Strategy::Greedy,
            k => Strategy::Beam(k),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub single_ref: bool,
    pub perplexity_seed: u64,
    pub dice_threshold: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            single_ref: false,
            perplexity_seed: 17,
            dice_threshold: DEFAULT_DICE_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSettings {
    pub conditions: Vec<String>,
    pub participants: usize,
    pub seed: u64,
}

impl Default for DesignSettings {
    fn default() -> Self {
        DesignSettings {
            conditions: DEFAULT_CONDITIONS.iter().map(|s| s.to_string()).collect(),
            participants: 21,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub data: DataSettings,
    pub model: ModelSettings,
    pub train: TrainSettings,
    pub decode: DecodeSettings,
    pub eval: EvalSettings,
    pub design: DesignSettings,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))
    }

    /// Canonical TOML rendering of the effective settings.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings always serialize")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    /// Lines every output file starts with.
    pub fn header(&self) -> Vec<String> {
        vec![TOOL.to_string(), format!("config sha256:{}", self.hash())]
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
