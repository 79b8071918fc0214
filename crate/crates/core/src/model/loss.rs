//! Multi-task objective: language modeling on response tokens, affect
//! prediction from the final hidden state and a two-way choice between the
//! true response and a distractor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{backward, check_ids, logits, run, Cache, Dropout};
use super::ops::{self, accumulate_at_d, c, log_sum_exp, matmul, softmax_in_place};
use super::{AffectMode, ModelError, ModelParams, Scalar, Variant};
use crate::corpus::{AffectLabel, TrainingExample};
use crate::tokenizer::TokenId;

/// One distractor sequence per example (context followed by another
/// response), or `None` for the language-model-only variant.
pub type Distractors<'a> = Option<&'a [Vec<TokenId>]>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub affect: f64,
    pub choice: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            affect: 1.0,
            choice: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub lm: f64,
    pub affect: f64,
    pub choice: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.lm.is_finite() && self.affect.is_finite() && self.choice.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AffectPrediction {
    /// Unbounded scalar estimate on the combined affect scale.
    Score(f64),
    Logits(Vec<f64>),
}

#[derive(Default)]
struct Terms {
    lm_sum: f64,
    affect: f64,
    choice: f64,
}

struct PassCtx<T> {
    lm_scale: T,
    aux_scale: T,
    weights: LossWeights,
    multitask: bool,
}

fn last_row<T: Copy>(v: &[T], n: usize, d: usize) -> &[T] {
    &v[(n - 1) * d..n * d]
}

fn check_label(mode: AffectMode, label: Option<AffectLabel>, index: usize) -> Result<AffectLabel, ModelError> {
    let label = label.ok_or(ModelError::MissingAffectLabel { index })?;
    match (mode, label) {
        (AffectMode::Regression, AffectLabel::Score(_)) => Ok(label),
        (AffectMode::Classification(k), AffectLabel::Class(c)) if c < k => Ok(label),
        _ => Err(ModelError::AffectLabelMismatch { index, mode }),
    }
}

fn pass<T: Scalar>(
    params: &ModelParams<T>,
    ex: &TrainingExample,
    index: usize,
    distractor: Option<&[TokenId]>,
    ctx: &PassCtx<T>,
    seed: Option<u64>,
    mut grads: Option<&mut ModelParams<T>>,
) -> Result<Terms, ModelError> {
    let cfg = &params.config;
    let (d, v) = (cfg.d_model, cfg.vocab_size);
    let mut rng = seed.filter(|_| cfg.dropout_rate > 0.0).map(ChaCha8Rng::seed_from_u64);
    let rate = cfg.dropout_rate;
    fn dropout(rng: &mut Option<ChaCha8Rng>, rate: f64) -> Option<Dropout<'_>> {
        rng.as_mut().map(|r| Dropout { rate, rng: r })
    }

    let ids = &ex.input_ids;
    let cache = run(params, ids, dropout(&mut rng, rate))?;
    let n = cache.len();
    let logit_mat = logits(params, &cache.hidden, n);
    let want_grad = grads.is_some();

    let mut terms = Terms::default();
    let mut dlogits = if want_grad { vec![T::zero(); n * v] } else { Vec::new() };
    for p in 1..n {
        if !ex.target_mask[p] {
            continue;
        }
        let row = &logit_mat[(p - 1) * v..p * v];
        let target = ids[p] as usize;
        let lse = log_sum_exp(row);
        terms.lm_sum += (lse - row[target]).to_f64().unwrap();
        if want_grad {
            let drow = &mut dlogits[(p - 1) * v..p * v];
            for (g, &l) in drow.iter_mut().zip(row) {
                *g = (l - lse).exp() * ctx.lm_scale;
            }
            drow[target] -= ctx.lm_scale;
        }
    }

    let mut dh_last = vec![T::zero(); d];
    let mut distractor_grad: Option<(Cache<T>, Vec<T>)> = None;
    if ctx.multitask {
        let h_last = last_row(&cache.hidden, n, d);

        // affect head (with dropout on its input)
        let label = check_label(cfg.affect_mode, ex.affect, index)?;
        let k = cfg.affect_mode.outputs();
        let head_mask = dropout(&mut rng, rate).map(|mut dr| dr.mask::<T>(d));
        let z: Vec<T> = match &head_mask {
            Some(m) => h_last.iter().zip(m).map(|(&h, &m)| h * m).collect(),
            None => h_last.to_vec(),
        };
        let out = matmul(&z, &params.affect_weight.data, Some(&params.affect_bias.data), 1, d, k);
        let wa = c::<T>(ctx.weights.affect);
        let dout: Vec<T> = match label {
            AffectLabel::Score(y) => {
                let diff = out[0] - c::<T>(y);
                terms.affect = (diff * diff).to_f64().unwrap();
                vec![c::<T>(2.0) * diff * ctx.aux_scale * wa]
            }
            AffectLabel::Class(cls) => {
                let lse = log_sum_exp(&out);
                terms.affect = (lse - out[cls]).to_f64().unwrap();
                let mut probs = out.clone();
                softmax_in_place(&mut probs);
                probs[cls] -= T::one();
                probs.iter().map(|&p| p * ctx.aux_scale * wa).collect()
            }
        };

        // choice head over [true, distractor]
        let distractor = distractor.expect("checked by caller");
        let dcache = run(params, distractor, dropout(&mut rng, rate))?;
        let dn = dcache.len();
        let wc = &params.choice_weight.data;
        let bc = params.choice_bias.data[0];
        let s_true = ops::dot(h_last, wc) + bc;
        let s_false = ops::dot(last_row(&dcache.hidden, dn, d), wc) + bc;
        let mut probs = [s_true, s_false];
        terms.choice = (log_sum_exp(&probs) - s_true).to_f64().unwrap();
        softmax_in_place(&mut probs);

        if let Some(g) = grads.as_deref_mut() {
            accumulate_at_d(&mut g.affect_weight.data, &z, &dout, 1, d, k);
            for (b, &o) in g.affect_bias.data.iter_mut().zip(&dout) {
                *b += o;
            }
            let dz = ops::matmul_bt(&dout, &params.affect_weight.data, 1, k, d);
            for j in 0..d {
                let m = head_mask.as_ref().map_or(T::one(), |m| m[j]);
                dh_last[j] += dz[j] * m;
            }

            let wm = c::<T>(ctx.weights.choice) * ctx.aux_scale;
            let ds_true = (probs[0] - T::one()) * wm;
            let ds_false = probs[1] * wm;
            let h_false = last_row(&dcache.hidden, dn, d);
            for j in 0..d {
                g.choice_weight.data[j] += h_last[j] * ds_true + h_false[j] * ds_false;
                dh_last[j] += wc[j] * ds_true;
            }
            g.choice_bias.data[0] += ds_true + ds_false;
            let mut dh_false = vec![T::zero(); dn * d];
            for j in 0..d {
                dh_false[(dn - 1) * d + j] = wc[j] * ds_false;
            }
            distractor_grad = Some((dcache, dh_false));
        }
    }

    if let Some(g) = grads {
        let mut dhidden = matmul(&dlogits, &params.token_embedding.data, None, n, v, d);
        accumulate_at_d(&mut g.token_embedding.data, &dlogits, &cache.hidden, n, v, d);
        for j in 0..d {
            dhidden[(n - 1) * d + j] += dh_last[j];
        }
        backward(params, &cache, &dhidden, g);
        if let Some((dcache, dh)) = distractor_grad {
            backward(params, &dcache, &dh, g);
        }
    }
    Ok(terms)
}

fn prepare<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[TrainingExample],
    distractors: Distractors<'_>,
    weights: LossWeights,
) -> Result<PassCtx<T>, ModelError> {
    let multitask = params.config.variant == Variant::Multitask;
    match distractors {
        Some(ds) if multitask && ds.len() == batch.len() => {}
        None if !multitask => {}
        _ => return Err(ModelError::DistractorMismatch),
    }
    let n_tokens: usize = batch
        .iter()
        .map(|ex| ex.target_mask.iter().skip(1).filter(|&&m| m).count())
        .sum();
    if n_tokens == 0 {
        return Err(ModelError::NoTargets);
    }
    if let Some(ds) = distractors {
        for d in ds {
            check_ids(params, d)?;
        }
    }
    Ok(PassCtx {
        lm_scale: c(1.0 / n_tokens as f64),
        aux_scale: c(1.0 / batch.len() as f64),
        weights,
        multitask,
    })
}

fn combine(terms: &[Terms], n_tokens_scale: f64, batch: usize, weights: LossWeights, multitask: bool) -> LossBreakdown {
    let lm = terms.iter().map(|t| t.lm_sum).sum::<f64>() * n_tokens_scale;
    if !multitask {
        return LossBreakdown {
            total: lm,
            lm,
            affect: 0.0,
            choice: 0.0,
        };
    }
    let affect = terms.iter().map(|t| t.affect).sum::<f64>() / batch as f64;
    let choice = terms.iter().map(|t| t.choice).sum::<f64>() / batch as f64;
    LossBreakdown {
        total: lm + weights.affect * affect + weights.choice * choice,
        lm,
        affect,
        choice,
    }
}

/// Loss components for a batch, dropout off.
pub fn multitask_loss<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[TrainingExample],
    distractors: Distractors<'_>,
    weights: LossWeights,
) -> Result<LossBreakdown, ModelError> {
    let ctx = prepare(params, batch, distractors, weights)?;
    let terms = batch
        .iter()
        .enumerate()
        .map(|(i, ex)| pass(params, ex, i, distractors.map(|d| d[i].as_slice()), &ctx, None, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(combine(
        &terms,
        ctx.lm_scale.to_f64().unwrap(),
        batch.len(),
        weights,
        ctx.multitask,
    ))
}

/// Loss components and gradients for every tensor. Per-example passes may
/// run in parallel; gradients are summed in example order, so the result
/// does not depend on scheduling. `dropout_seed` enables dropout.
pub fn loss_and_grad<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[TrainingExample],
    distractors: Distractors<'_>,
    weights: LossWeights,
    dropout_seed: Option<u64>,
) -> Result<(LossBreakdown, ModelParams<T>), ModelError> {
    let ctx = prepare(params, batch, distractors, weights)?;
    let seeds: Vec<Option<u64>> = match dropout_seed {
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..batch.len()).map(|_| Some(rng.random())).collect()
        }
        None => vec![None; batch.len()],
    };
    let results = batch
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut g = params.zeros_like();
            let terms = pass(
                params,
                ex,
                i,
                distractors.map(|d| d[i].as_slice()),
                &ctx,
                seeds[i],
                Some(&mut g),
            )?;
            Ok((terms, g))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;

    let mut grads = params.zeros_like();
    let mut terms = Vec::with_capacity(results.len());
    for (t, g) in results {
        grads.add_assign(&g);
        terms.push(t);
    }
    let loss = combine(
        &terms,
        ctx.lm_scale.to_f64().unwrap(),
        batch.len(),
        weights,
        ctx.multitask,
    );
    Ok((loss, grads))
}

/// Summed negative log-likelihood over the example's target positions and
/// the number of those positions.
pub fn sequence_nll<T: Scalar>(params: &ModelParams<T>, ex: &TrainingExample) -> Result<(f64, usize), ModelError> {
    let cache = run(params, &ex.input_ids, None)?;
    let n = cache.len();
    let v = params.config.vocab_size;
    let logit_mat = logits(params, &cache.hidden, n);
    let mut sum = 0.0;
    let mut count = 0;
    for p in 1..n {
        if ex.target_mask[p] {
            let row = &logit_mat[(p - 1) * v..p * v];
            sum += (log_sum_exp(row) - row[ex.input_ids[p] as usize]).to_f64().unwrap();
            count += 1;
        }
    }
    Ok((sum, count))
}

/// Affect head output read from the final position of `ids`.
pub fn predict_affect<T: Scalar>(params: &ModelParams<T>, ids: &[TokenId]) -> Result<AffectPrediction, ModelError> {
    let cache = run(params, ids, None)?;
    let d = params.config.d_model;
    let k = params.config.affect_mode.outputs();
    let h = last_row(&cache.hidden, cache.len(), d);
    let out = matmul(h, &params.affect_weight.data, Some(&params.affect_bias.data), 1, d, k);
    let out: Vec<f64> = out.iter().map(|x| x.to_f64().unwrap()).collect();
    Ok(match params.config.affect_mode {
        AffectMode::Regression => AffectPrediction::Score(out[0]),
        AffectMode::Classification(_) => AffectPrediction::Logits(out),
    })
}

/// Choice-head score of a candidate sequence.
pub fn choice_score<T: Scalar>(params: &ModelParams<T>, ids: &[TokenId]) -> Result<f64, ModelError> {
    let cache = run(params, ids, None)?;
    let d = params.config.d_model;
    let h = last_row(&cache.hidden, cache.len(), d);
    Ok((ops::dot(h, &params.choice_weight.data) + params.choice_bias.data[0])
        .to_f64()
        .unwrap())
}
