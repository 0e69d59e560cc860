use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ModelError;

/// How the encoder turns head scores into attention over head words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionMode {
    /// No head-word layer at all.
    None,
    /// Exact tree marginals.
    Structured,
    /// Column softmax of the scores.
    Flat,
    /// One-hot argmax of the tree marginals, straight-through gradients.
    StructuredHard,
}

/// How the decoder consumes the syntactic annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderMode {
    Baseline,
    /// Reuses the word attention weights.
    Shared,
    /// Its own attention layer over the syntactic annotations.
    Separate,
    /// Syntax folded into the source annotations; a single attention layer.
    OneSet,
    HardShared,
}

/// Model variants exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelMode {
    Baseline,
    FaShared,
    FaSeparate,
    SaShared,
    SaSeparate,
    #[serde(rename = "sa-1set")]
    SaOneSet,
    SaHard,
}

impl ModelMode {
    pub const ALL: [ModelMode; 7] = [
        ModelMode::Baseline,
        ModelMode::FaShared,
        ModelMode::FaSeparate,
        ModelMode::SaShared,
        ModelMode::SaSeparate,
        ModelMode::SaOneSet,
        ModelMode::SaHard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelMode::Baseline => "baseline",
            ModelMode::FaShared => "fa-shared",
            ModelMode::FaSeparate => "fa-separate",
            ModelMode::SaShared => "sa-shared",
            ModelMode::SaSeparate => "sa-separate",
            ModelMode::SaOneSet => "sa-1set",
            ModelMode::SaHard => "sa-hard",
        }
    }

    pub fn attention(self) -> AttentionMode {
        match self {
            ModelMode::Baseline => AttentionMode::None,
            ModelMode::FaShared | ModelMode::FaSeparate => AttentionMode::Flat,
            ModelMode::SaShared | ModelMode::SaSeparate | ModelMode::SaOneSet => {
                AttentionMode::Structured
            }
            ModelMode::SaHard => AttentionMode::StructuredHard,
        }
    }

    pub fn decoder(self) -> DecoderMode {
        match self {
            ModelMode::Baseline => DecoderMode::Baseline,
            ModelMode::FaShared | ModelMode::SaShared => DecoderMode::Shared,
            ModelMode::FaSeparate | ModelMode::SaSeparate => DecoderMode::Separate,
            ModelMode::SaOneSet => DecoderMode::OneSet,
            ModelMode::SaHard => DecoderMode::HardShared,
        }
    }
}

impl fmt::Display for ModelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelMode::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ModelMode::ALL.iter().map(|m| m.name()).collect();
                ModelError::Config(format!("unknown mode '{}', expected one of {}", s, names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: ModelMode,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    /// Embedding and hidden width; each encoder direction gets half.
    pub dim: usize,
    pub layers: usize,
    pub dropout: f64,
    pub init_range: f64,
    pub max_source_len: usize,
}

impl ModelConfig {
    pub fn new(mode: ModelMode, src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        ModelConfig {
            mode,
            src_vocab_size,
            tgt_vocab_size,
            dim: 64,
            layers: 1,
            dropout: 0.3,
            init_range: 0.04,
            max_source_len: 400,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.dim == 0 || self.dim % 2 != 0 {
            return bad(format!("dimension must be even and positive, got {}", self.dim));
        }
        if self.layers == 0 {
            return bad("at least one layer is required".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.init_range > 0.0) {
            return bad(format!("init range must be positive, got {}", self.init_range));
        }
        if self.src_vocab_size < 5 || self.tgt_vocab_size < 5 {
            return bad("vocabularies must contain at least one regular token".into());
        }
        if self.max_source_len == 0 {
            return bad("maximum source length must be positive".into());
        }
        Ok(())
    }

    pub fn half(&self) -> usize {
        self.dim / 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for mode in ModelMode::ALL {
            assert_eq!(mode.name().parse::<ModelMode>().unwrap(), mode);
            let json = serde_json::to_string(&mode).unwrap();
            assert_eq!(json, format!("\"{}\"", mode.name()));
        }
        assert!("sa".parse::<ModelMode>().is_err());
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::new(ModelMode::SaShared, 10, 10);
        assert!(c.validate().is_ok());
        c.dim = 63;
        assert!(c.validate().is_err());
        c.dim = 64;
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }
}
