use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Unimodal,
    InitInject,
    Merge,
    ImageOnly,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Unimodal,
        Variant::InitInject,
        Variant::Merge,
        Variant::ImageOnly,
    ];

    pub fn uses_image(self) -> bool {
        self != Variant::Unimodal
    }

    pub fn uses_text_encoder(self) -> bool {
        self != Variant::ImageOnly
    }

    /// Command-line spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Unimodal => "unimodal",
            Variant::InitInject => "init-inject",
            Variant::Merge => "merge",
            Variant::ImageOnly => "image-only",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "unimodal" => Ok(Variant::Unimodal),
            "init-inject" => Ok(Variant::InitInject),
            "merge" => Ok(Variant::Merge),
            "image-only" => Ok(Variant::ImageOnly),
            _ => Err(Error::Config(format!(
                "unknown variant {s:?} (expected unimodal, init-inject, merge or image-only)"
            ))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub image_dim: usize,
    pub image_proj_dim: usize,
    pub vocab_size: usize,
    pub max_decode_len: usize,
}

impl ModelConfig {
    /// 256-d embeddings and states, 4096-d image features projected to 256.
    pub fn new(variant: Variant, vocab_size: usize) -> Self {
        ModelConfig {
            variant,
            embed_dim: 256,
            hidden_dim: 256,
            image_dim: 4096,
            image_proj_dim: 256,
            vocab_size,
            max_decode_len: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut dims = vec![
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("vocab_size", self.vocab_size),
            ("max_decode_len", self.max_decode_len),
        ];
        if self.variant.uses_image() {
            dims.push(("image_dim", self.image_dim));
            dims.push(("image_proj_dim", self.image_proj_dim));
        }
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.vocab_size <= crate::corpus::UNK {
            return Err(Error::Config("vocab_size must exceed the reserved tokens".into()));
        }
        Ok(())
    }

    /// Width of the image projection output: the encoder state size for
    /// init-inject, `image_proj_dim` otherwise.
    pub fn image_out_dim(&self) -> usize {
        match self.variant {
            Variant::InitInject => self.hidden_dim,
            _ => self.image_proj_dim,
        }
    }

    pub fn source_dim(&self) -> usize {
        match self.variant {
            Variant::Unimodal | Variant::InitInject => self.hidden_dim,
            Variant::Merge => self.hidden_dim + self.image_proj_dim,
            Variant::ImageOnly => self.image_proj_dim,
        }
    }
}
