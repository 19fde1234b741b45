//! Model, training, and noising hyperparameters with validated defaults.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("model width {width} is not divisible by head count {heads}")]
    WidthHeads { width: usize, heads: usize },
    #[error("{field} must be positive")]
    NonPositive { field: &'static str },
    #[error("{field} = {value} is outside [0, 1)")]
    BadDropout { field: &'static str, value: f64 },
    #[error("vocab size {vocab} is below the reserved special-token count {specials}")]
    VocabTooSmall { vocab: usize, specials: usize },
}

/// Architecture hyperparameters for the compact encoder–decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Transformer layers per stack (`n` means `n` encoder + `n` decoder).
    pub layers: usize,
    pub heads: usize,
    /// Model (embedding/residual) width.
    pub width: usize,
    /// Feed-forward inner width.
    pub ffn_width: usize,
    /// Hard cap on sequence length, framing tokens included.
    pub max_len: usize,
    pub dropout: f64,
    pub attention_dropout: f64,
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            heads: 4,
            width: 128,
            ffn_width: 256,
            max_len: 128,
            dropout: 0.3,
            attention_dropout: 0.1,
            vocab_size: 1000,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("layers", self.layers),
            ("heads", self.heads),
            ("width", self.width),
            ("ffn_width", self.ffn_width),
            ("max_len", self.max_len),
        ] {
            if value == 0 {
                return Err(ConfigError::NonPositive { field });
            }
        }
        if self.width % self.heads != 0 {
            return Err(ConfigError::WidthHeads {
                width: self.width,
                heads: self.heads,
            });
        }
        for (field, value) in [
            ("dropout", self.dropout),
            ("attention_dropout", self.attention_dropout),
        ] {
            if !(0.0..1.0).contains(&value) {
                return Err(ConfigError::BadDropout { field, value });
            }
        }
        let specials = crate::model::subword::SPECIAL_TOKEN_COUNT;
        if self.vocab_size < specials {
            return Err(ConfigError::VocabTooSmall {
                vocab: self.vocab_size,
                specials,
            });
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }
}

/// Optimization hyperparameters for one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Overrides `ModelConfig::dropout` for this stage when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    /// Overrides `ModelConfig::attention_dropout` for this stage when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention_dropout: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3,
            learning_rate: 3e-5,
            batch_size: 32,
            seed: 222,
            dropout: None,
            attention_dropout: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.epochs == 0 {
            return Err(ConfigError::NonPositive { field: "epochs" });
        }
        if self.batch_size == 0 {
            return Err(ConfigError::NonPositive { field: "batch_size" });
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(ConfigError::NonPositive { field: "learning_rate" });
        }
        for (field, value) in [("dropout", self.dropout), ("attention_dropout", self.attention_dropout)] {
            if let Some(v) = value {
                if !(0.0..1.0).contains(&v) {
                    return Err(ConfigError::BadDropout { field, value: v });
                }
            }
        }
        Ok(())
    }
}

/// Span-masking noise parameters for the denoising objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Fraction of tokens covered by masked spans.
    pub mask_ratio: f64,
    /// Mean sampled span length (Poisson parameter), clamped to ≥1 per span.
    pub mean_span_len: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            mask_ratio: 0.35,
            mean_span_len: 3.5,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(ConfigError::BadDropout {
                field: "mask_ratio",
                value: self.mask_ratio,
            });
        }
        if !(self.mean_span_len > 0.0) {
            return Err(ConfigError::NonPositive {
                field: "mean_span_len",
            });
        }
        Ok(())
    }
}
