//! Optimization loop with phased corpus schedules, distractor sampling,
//! gradient checking and checkpoint persistence.

mod checkpoint;
mod distractor;
mod gradcheck;
mod optim;

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint, CheckpointError, FORMAT_VERSION, MAGIC,
};
pub use distractor::sample_distractor;
pub use gradcheck::{grad_check, GradCheckReport, Probe, REL_FLOOR};
pub use optim::{clip_global_norm, global_norm, Adam};

use distractor::DistractorPool;

use crate::corpus::{CorpusError, TrainingExample};
use crate::metrics::{perplexity, MetricsError};
use crate::model::{
    loss_and_grad, reinit_affect_head, AffectMode, LossBreakdown, LossWeights, ModelError, ModelParams, Variant,
    AFFECT_HEAD_PREFIX,
};
use crate::tokenizer::Vocab;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("cannot sample a distractor: {0}")]
    NoDistractor(String),
    #[error("phase {phase} needs the {corpus} corpus, which was not supplied")]
    MissingCorpus { phase: usize, corpus: CorpusId },
    #[error("non-finite loss in phase {phase}, epoch {epoch}, batch {batch} (step {step}): {loss:?}")]
    NonFiniteLoss {
        phase: usize,
        epoch: usize,
        batch: usize,
        step: u64,
        loss: LossBreakdown,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusId {
    Rdg,
    Ed,
}

impl fmt::Display for CorpusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusId::Rdg => "rdg",
            CorpusId::Ed => "ed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub corpus: CorpusId,
    pub affect_mode: AffectMode,
    /// Falls back to [`TrainConfig::epochs`].
    #[serde(default)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub phases: Vec<PhasePlan>,
    /// Global-norm clipping threshold; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Share of each phase's examples held out for validation perplexity.
    pub validation_fraction: f64,
    /// Hard cap on optimizer steps across all phases.
    #[serde(default)]
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 8,
            epochs: 1,
            seed: 0,
            weights: LossWeights::default(),
            phases: vec![PhasePlan {
                corpus: CorpusId::Rdg,
                affect_mode: AffectMode::Regression,
                epochs: None,
            }],
            grad_clip: Some(1.0),
            validation_fraction: 0.1,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.phases.is_empty() {
            return bad("phase plan is empty");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }
}

/// Prepared examples for each corpus a phase plan may name.
#[derive(Debug, Clone, Default)]
pub struct Corpora {
    pub rdg: Option<Vec<TrainingExample>>,
    pub ed: Option<Vec<TrainingExample>>,
}

impl Corpora {
    pub fn get(&self, id: CorpusId) -> Option<&[TrainingExample]> {
        match id {
            CorpusId::Rdg => self.rdg.as_deref(),
            CorpusId::Ed => self.ed.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: usize,
    pub corpus: CorpusId,
    pub epoch: usize,
    pub step: u64,
    pub lm: f64,
    pub affect: f64,
    pub choice: f64,
    pub val_perplexity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TrainEvent {
    HeadReinit {
        phase: usize,
        step: u64,
        from: AffectMode,
        to: AffectMode,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub events: Vec<TrainEvent>,
}

impl TrainLog {
    pub fn head_reinits(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TrainEvent::HeadReinit { .. }))
            .count()
    }
}

/// Seeded split of a phase's examples into (train, validation) indices.
fn holdout(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_val = ((n as f64) * fraction).round() as usize;
    let n_val = n_val.min(n.saturating_sub(1));
    let val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    train.sort_unstable();
    (train, val)
}

/// Runs the phase plan in order and returns the final checkpoint and log.
///
/// A phase whose affect mode differs from the previous phase's gets a freshly
/// initialized affect head (and fresh optimizer moments for it); all other
/// tensors carry over unchanged. If the first phase's mode differs from the
/// model's, the head is resized before training without a log event.
/// Results are deterministic for a fixed seed.
pub fn train(
    corpora: &Corpora,
    model: ModelParams<f32>,
    config: &TrainConfig,
    vocab: &Vocab,
) -> Result<(Checkpoint, TrainLog), TrainError> {
    config.validate()?;
    model.config.validate()?;
    if model.config.vocab_size != vocab.len() {
        return Err(TrainError::InvalidConfig(format!(
            "model vocab_size {} differs from vocabulary size {}",
            model.config.vocab_size,
            vocab.len()
        )));
    }
    for (i, phase) in config.phases.iter().enumerate() {
        if corpora.get(phase.corpus).is_none_or(|c| c.is_empty()) {
            return Err(TrainError::MissingCorpus {
                phase: i,
                corpus: phase.corpus,
            });
        }
    }

    let multitask = model.config.variant == Variant::Multitask;
    let max_len = model.config.max_seq_len;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model;
    if multitask && params.config.affect_mode != config.phases[0].affect_mode {
        params = reinit_affect_head(&params, config.phases[0].affect_mode, rng.random())?;
    }
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut log = TrainLog::default();
    let mut step = 0u64;
    let mut phase_index = 0;

    'phases: for (pi, phase) in config.phases.iter().enumerate() {
        phase_index = pi;
        if pi > 0 && multitask && params.config.affect_mode != phase.affect_mode {
            let from = params.config.affect_mode;
            params = reinit_affect_head(&params, phase.affect_mode, rng.random())?;
            adam.reset_tensors(&params, AFFECT_HEAD_PREFIX);
            log.events.push(TrainEvent::HeadReinit {
                phase: pi,
                step,
                from,
                to: phase.affect_mode,
            });
        }

        let data = corpora.get(phase.corpus).expect("checked above");
        let (train_idx, val_idx) = holdout(data.len(), config.validation_fraction, &mut rng);
        let train_set: Vec<TrainingExample> = train_idx.iter().map(|&i| data[i].clone()).collect();
        let val_set: Vec<TrainingExample> = val_idx.iter().map(|&i| data[i].clone()).collect();
        let pool = if multitask {
            Some(DistractorPool::new(&train_set)?)
        } else {
            None
        };

        for epoch in 0..phase.epochs.unwrap_or(config.epochs) {
            let mut order: Vec<usize> = (0..train_set.len()).collect();
            order.shuffle(&mut rng);
            let mut sums = LossBreakdown::default();
            let mut seen = 0usize;
            for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
                if config.max_steps.is_some_and(|m| step >= m) {
                    log_epoch(&mut log, &params, pi, phase, epoch, step, sums, seen, &val_set)?;
                    break 'phases;
                }
                let batch: Vec<TrainingExample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
                let distractors = match &pool {
                    Some(pool) => Some(
                        batch
                            .iter()
                            .map(|ex| {
                                let other = pool.sample(&ex.group, &mut rng);
                                ex.with_response(other.response(), vocab, max_len)
                            })
                            .collect::<Result<Vec<_>, _>>()?,
                    ),
                    None => None,
                };
                let dropout_seed = (params.config.dropout_rate > 0.0).then(|| rng.random());
                let (loss, mut grads) =
                    loss_and_grad(&params, &batch, distractors.as_deref(), config.weights, dropout_seed)?;
                if !loss.is_finite() || !grads.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        phase: pi,
                        epoch,
                        batch: bi,
                        step,
                        loss,
                    });
                }
                if let Some(clip) = config.grad_clip {
                    clip_global_norm(&mut grads, clip);
                }
                adam.update(&mut params, &grads);
                step += 1;
                let w = batch.len() as f64;
                sums.lm += loss.lm * w;
                sums.affect += loss.affect * w;
                sums.choice += loss.choice * w;
                seen += batch.len();
            }
            log_epoch(&mut log, &params, pi, phase, epoch, step, sums, seen, &val_set)?;
        }
    }

    let checkpoint = Checkpoint {
        params,
        optimizer: adam,
        vocab_hash: vocab.hash(),
        step,
        phase_index,
    };
    Ok((checkpoint, log))
}

#[allow(clippy::too_many_arguments)]
fn log_epoch(
    log: &mut TrainLog,
    params: &ModelParams<f32>,
    phase: usize,
    plan: &PhasePlan,
    epoch: usize,
    step: u64,
    sums: LossBreakdown,
    seen: usize,
    val_set: &[TrainingExample],
) -> Result<(), TrainError> {
    if seen == 0 {
        return Ok(());
    }
    let n = seen as f64;
    let val_perplexity = if val_set.is_empty() {
        None
    } else {
        Some(perplexity(params, val_set)?)
    };
    log.epochs.push(EpochLog {
        phase,
        corpus: plan.corpus,
        epoch,
        step,
        lm: sums.lm / n,
        affect: sums.affect / n,
        choice: sums.choice / n,
        val_perplexity,
    });
    Ok(())
}
