//! Micro decoder-only transformer with a tied language-model head, an affect
//! head (regression or K-way classification) and a multiple-choice head.

mod forward;
mod loss;
pub(crate) mod ops;
mod params;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, NumAssign};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forward::{forward, forward_traced, next_token_logits, ForwardOutput, ForwardTrace};
pub use loss::{
    choice_score, loss_and_grad, multitask_loss, predict_affect, sequence_nll, AffectPrediction, Distractors,
    LossBreakdown, LossWeights,
};
pub use params::{init, reinit_affect_head, LayerParams, ModelParams, Tensor, AFFECT_HEAD_PREFIX, CHOICE_HEAD_PREFIX};

/// Floating-point element type of model tensors. Training runs in `f32`;
/// gradient checks in `f64`.
pub trait Scalar: Float + NumAssign + Sum + Send + Sync + Debug + Default + 'static {}

impl<T> Scalar for T where T: Float + NumAssign + Sum + Send + Sync + Debug + Default + 'static {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    LmOnly,
    Multitask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectMode {
    Regression,
    Classification(usize),
}

impl AffectMode {
    pub fn outputs(self) -> usize {
        match self {
            AffectMode::Regression => 1,
            AffectMode::Classification(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    #[serde(default)]
    pub dropout_rate: f64,
    pub variant: Variant,
    pub affect_mode: AffectMode,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: String| Err(ModelError::InvalidConfig(reason));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.vocab_size == 0 || self.max_seq_len == 0 {
            return bad("dimensions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if let AffectMode::Classification(k) = self.affect_mode {
            if k < 2 {
                return bad(format!("classification needs at least 2 classes, got {k}"));
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// A small configuration suited to tests and desk-scale experiments.
    pub fn micro(vocab_size: usize, max_seq_len: usize) -> Self {
        Self {
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            d_ff: 32,
            vocab_size,
            max_seq_len,
            dropout_rate: 0.0,
            variant: Variant::Multitask,
            affect_mode: AffectMode::Regression,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("token id {id} outside vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },
    #[error("example {index} lacks an affect label required in multitask mode")]
    MissingAffectLabel { index: usize },
    #[error("affect label of example {index} does not match head mode {mode:?}")]
    AffectLabelMismatch { index: usize, mode: AffectMode },
    #[error("distractors must be supplied exactly when the variant is multitask")]
    DistractorMismatch,
    #[error("batch contains no target tokens")]
    NoTargets,
    #[error("operation requires the multitask variant")]
    NotMultitask,
}
