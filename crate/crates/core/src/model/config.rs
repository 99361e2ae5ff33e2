use serde::{Deserialize, Serialize};

use crate::error::{BlancError, Result};
use crate::numerics::AdamConfig;
use crate::soft_label::SoftLabelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub dropout: f64,
    /// Initialization seed.
    pub seed: u64,
    /// Positions the context-boundary softmaxes normalize over.
    #[serde(default)]
    pub context_softmax: SoftmaxDomain,
}

/// Domain of the context-boundary softmaxes. Losses, the answer head and
/// decoding always use passage positions; with `All`, boundary mass may also
/// fall on question and separator positions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoftmaxDomain {
    #[default]
    Passage,
    All,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 2,
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn: 128,
            max_len: 256,
            dropout: 0.1,
            seed: 0,
            context_softmax: SoftmaxDomain::Passage,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BlancError::Config(m));
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return bad(format!("hidden size {} must be a positive multiple of heads {}", self.hidden, self.heads));
        }
        if self.layers > 0 && self.ffn == 0 {
            return bad("feed-forward size must be positive".into());
        }
        if self.max_len < 2 {
            return bad(format!("max length {} too small", self.max_len));
        }
        if self.vocab_size < 2 {
            return bad("vocabulary needs at least the two reserved tokens".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// How the per-position context cross-entropy is reduced within an example.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextReduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the context loss; the answer loss gets `1 - lambda`.
    pub lambda: f64,
    pub soft_label: SoftLabelConfig,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Shuffling and dropout seed.
    pub seed: u64,
    pub max_answer_len: usize,
    pub context_reduction: ContextReduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.8,
            soft_label: SoftLabelConfig::SHORT_PASSAGE,
            optimizer: AdamConfig::default(),
            batch_size: 8,
            epochs: 30,
            seed: 0,
            max_answer_len: 30,
            context_reduction: ContextReduction::Sum,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BlancError::Config(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        self.soft_label.validate()?;
        if !(self.optimizer.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.optimizer.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.max_answer_len == 0 {
            return bad("max answer length must be positive".into());
        }
        Ok(())
    }
}
