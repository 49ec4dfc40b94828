//! Toy-scale autoregressive skeleton generator.
//!
//! A decoder-only transformer over the tokenizer's vocabulary, conditioned on
//! a point-cloud shape encoding through cross-attention, with level position
//! embeddings added to the input. Everything is f64 and written with explicit
//! forward/backward passes so losses can be gradient-checked; training is
//! deterministic given a seed.

mod checkpoint;
mod condition;
mod dpo;
mod gradcheck;
pub mod optim;
mod params;
mod sample;
mod train;
mod transformer;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use condition::{
    build_condition_cache, condition_forward, encode_shape_condition, ConditionCache,
    ConditionTrace, CONDITION_FEATURE_DIM,
};
pub use dpo::{dpo_loss, dpo_loss_grad, DpoVariant, DEFAULT_BETA, DEFAULT_LAMBDA};
pub use gradcheck::{finite_difference_gradcheck, DifferentiableLoss, GradCheckReport};
pub use params::{Layout, Parameters};
pub use sample::{sample_skeleton, sample_with_cache, SampleMode, SampleResult};
pub use train::{
    build_stage1_dataset, eval_mean_loss, implicit_reward_margin, stage2_loss,
    stage2_loss_and_grad, train_stage1, train_stage2, Stage1Dataset, Stage2Dataset,
    Stage2Example, Stage2Report, TrainConfig, TrainExample, TrainReport,
};
pub use transformer::{
    backward_logits, forward_logits, next_token_loss, next_token_loss_and_grad,
    sequence_logprob, sequence_logprob_and_grad, ForwardTrace,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("sequence does not fit the context window: {0}")]
    Context(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Transformer dimensions and conditioning geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub context: usize,
    pub vocab: usize,
    /// Level-embedding table size (maximum tree depth).
    pub level_table: usize,
    /// Number of condition tokens (farthest-point anchors).
    pub condition_tokens: usize,
    /// Support points pooled per anchor by the shape encoder.
    pub condition_points: usize,
    /// MLP hidden width as a multiple of `width`.
    pub mlp_ratio: usize,
}

impl ModelConfig {
    /// The preset used by every desk-scale run.
    pub fn toy(vocab: usize) -> Self {
        Self {
            layers: 4,
            width: 128,
            heads: 4,
            context: 512,
            vocab,
            level_table: 16,
            condition_tokens: 8,
            condition_points: 128,
            mlp_ratio: 4,
        }
    }

    /// Narrow preset for gradient checks.
    pub fn tiny(vocab: usize) -> Self {
        Self {
            layers: 2,
            width: 32,
            heads: 2,
            context: 64,
            vocab,
            level_table: 16,
            condition_tokens: 4,
            condition_points: 16,
            mlp_ratio: 4,
        }
    }

    /// The full-scale configuration this architecture mirrors (24 layers,
    /// width 1024, 16 heads). Kept as a documented constant; desk-scale runs
    /// never instantiate it.
    pub fn full_scale_reference() -> Self {
        Self {
            layers: 24,
            width: 1024,
            heads: 16,
            context: 2048,
            vocab: 260,
            level_table: 32,
            condition_tokens: 64,
            condition_points: 2048,
            mlp_ratio: 4,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        self.width * self.mlp_ratio
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.width % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "width {} not divisible by heads {}",
                self.width, self.heads
            )));
        }
        if self.layers == 0 || self.vocab == 0 || self.context == 0 {
            return Err(ModelError::Config("zero-sized model dimension".into()));
        }
        if self.condition_tokens == 0 || self.condition_points < self.condition_tokens {
            return Err(ModelError::Config(
                "condition_points must be >= condition_tokens > 0".into(),
            ));
        }
        Ok(())
    }
}
