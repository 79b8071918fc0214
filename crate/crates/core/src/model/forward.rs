//! Pre-norm decoder stack: forward pass with activation cache and the
//! matching reverse-mode pass.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ops::{
    self, accumulate_at_d, accumulate_rows, c, gelu, gelu_grad, layer_norm, layer_norm_backward, matmul, matmul_bt,
    LayerNormCache,
};
use super::{ModelError, ModelParams, Scalar};
use crate::tokenizer::TokenId;

/// Inverted-dropout masks; entries are 0 or `1 / (1 - rate)`.
pub(crate) struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    pub(crate) fn mask<T: Scalar>(&mut self, n: usize) -> Vec<T> {
        let keep = c::<T>(1.0 / (1.0 - self.rate));
        (0..n)
            .map(|_| {
                if self.rng.random::<f64>() < self.rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect()
    }
}

struct LayerCache<T> {
    ln1: LayerNormCache<T>,
    a: Vec<T>,
    qkv: Vec<T>,
    /// Per head, row-major `[T×T]` causal attention probabilities.
    att: Vec<T>,
    att_mask: Option<Vec<T>>,
    y: Vec<T>,
    ln2: LayerNormCache<T>,
    c: Vec<T>,
    f: Vec<T>,
    g: Vec<T>,
    proj_mask: Option<Vec<T>>,
}

/// Everything the backward pass needs from one sequence.
pub(crate) struct Cache<T> {
    ids: Vec<TokenId>,
    emb_mask: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    lnf: LayerNormCache<T>,
    pub hidden: Vec<T>,
}

impl<T> Cache<T> {
    pub(crate) fn len(&self) -> usize {
        self.ids.len()
    }
}

pub struct ForwardOutput<T> {
    /// `[T×V]` next-token logits.
    pub logits: Vec<T>,
    /// `[T×d]` final normalized hidden states.
    pub hidden: Vec<T>,
    pub seq_len: usize,
}

impl<T: Scalar> ForwardOutput<T> {
    pub fn logits_at(&self, pos: usize) -> &[T] {
        let v = self.logits.len() / self.seq_len;
        &self.logits[pos * v..(pos + 1) * v]
    }

    pub fn last_hidden(&self) -> &[T] {
        let d = self.hidden.len() / self.seq_len;
        &self.hidden[(self.seq_len - 1) * d..]
    }
}

/// Forward output plus per-layer, per-head attention probabilities
/// (`attention[layer][head]` is a row-major `[T×T]` matrix).
pub struct ForwardTrace<T> {
    pub output: ForwardOutput<T>,
    pub attention: Vec<Vec<Vec<T>>>,
}

pub(crate) fn check_ids<T>(params: &ModelParams<T>, ids: &[TokenId]) -> Result<(), ModelError> {
    let cfg = &params.config;
    if ids.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if ids.len() > cfg.max_seq_len {
        return Err(ModelError::SequenceTooLong {
            len: ids.len(),
            max: cfg.max_seq_len,
        });
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            id,
            size: cfg.vocab_size,
        });
    }
    Ok(())
}

pub(crate) fn run<T: Scalar>(
    params: &ModelParams<T>,
    ids: &[TokenId],
    mut dropout: Option<Dropout<'_>>,
) -> Result<Cache<T>, ModelError> {
    check_ids(params, ids)?;
    let cfg = &params.config;
    let (n, d, h) = (ids.len(), cfg.d_model, cfg.n_heads);
    let dh = cfg.head_dim();
    let ff = cfg.d_ff;
    let scale = c::<T>(1.0 / (dh as f64).sqrt());

    let mut x = vec![T::zero(); n * d];
    for (t, &id) in ids.iter().enumerate() {
        let tok = &params.token_embedding.data[id as usize * d..(id as usize + 1) * d];
        let pos = &params.position_embedding.data[t * d..(t + 1) * d];
        for j in 0..d {
            x[t * d + j] = tok[j] + pos[j];
        }
    }
    let emb_mask = dropout.as_mut().map(|dr| dr.mask::<T>(n * d));
    if let Some(m) = &emb_mask {
        x.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
    }

    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (a, ln1) = layer_norm(&x, &lp.ln1_gain.data, &lp.ln1_bias.data, d);
        let qkv = matmul(&a, &lp.qkv_weight.data, Some(&lp.qkv_bias.data), n, d, 3 * d);

        let mut att = vec![T::zero(); h * n * n];
        for head in 0..h {
            for i in 0..n {
                let q = &qkv[i * 3 * d + head * dh..i * 3 * d + (head + 1) * dh];
                let row = &mut att[head * n * n + i * n..head * n * n + i * n + i + 1];
                for (j, s) in row.iter_mut().enumerate() {
                    let k = &qkv[j * 3 * d + d + head * dh..j * 3 * d + d + (head + 1) * dh];
                    *s = ops::dot(q, k) * scale;
                }
                ops::softmax_in_place(row);
            }
        }
        let att_mask = dropout.as_mut().map(|dr| dr.mask::<T>(h * n * n));

        let mut y = vec![T::zero(); n * d];
        for head in 0..h {
            for i in 0..n {
                for j in 0..=i {
                    let idx = head * n * n + i * n + j;
                    let mut w = att[idx];
                    if let Some(m) = &att_mask {
                        w *= m[idx];
                    }
                    if w == T::zero() {
                        continue;
                    }
                    let v = &qkv[j * 3 * d + 2 * d + head * dh..j * 3 * d + 2 * d + (head + 1) * dh];
                    let out = &mut y[i * d + head * dh..i * d + (head + 1) * dh];
                    for (o, &vv) in out.iter_mut().zip(v) {
                        *o += w * vv;
                    }
                }
            }
        }
        let o = matmul(&y, &lp.out_weight.data, Some(&lp.out_bias.data), n, d, d);
        x.iter_mut().zip(&o).for_each(|(a, &b)| *a += b);

        let (cn, ln2) = layer_norm(&x, &lp.ln2_gain.data, &lp.ln2_bias.data, d);
        let f = matmul(&cn, &lp.fc_weight.data, Some(&lp.fc_bias.data), n, d, ff);
        let g: Vec<T> = f.iter().map(|&v| gelu(v)).collect();
        let mut p = matmul(&g, &lp.proj_weight.data, Some(&lp.proj_bias.data), n, ff, d);
        let proj_mask = dropout.as_mut().map(|dr| dr.mask::<T>(n * d));
        if let Some(m) = &proj_mask {
            p.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
        }
        x.iter_mut().zip(&p).for_each(|(a, &b)| *a += b);

        layers.push(LayerCache {
            ln1,
            a,
            qkv,
            att,
            att_mask,
            y,
            ln2,
            c: cn,
            f,
            g,
            proj_mask,
        });
    }

    let (hidden, lnf) = layer_norm(&x, &params.final_gain.data, &params.final_bias.data, d);
    Ok(Cache {
        ids: ids.to_vec(),
        emb_mask,
        layers,
        lnf,
        hidden,
    })
}

/// Logits `[T×V] = hidden · Eᵀ` through the tied embedding.
pub(crate) fn logits<T: Scalar>(params: &ModelParams<T>, hidden: &[T], n: usize) -> Vec<T> {
    let cfg = &params.config;
    matmul_bt(hidden, &params.token_embedding.data, n, cfg.d_model, cfg.vocab_size)
}

/// Back-propagates `d_hidden` (`[T×d]`) through the stack, accumulating
/// into `grads`.
pub(crate) fn backward<T: Scalar>(
    params: &ModelParams<T>,
    cache: &Cache<T>,
    d_hidden: &[T],
    grads: &mut ModelParams<T>,
) {
    let cfg = &params.config;
    let (n, d, h) = (cache.len(), cfg.d_model, cfg.n_heads);
    let dh = cfg.head_dim();
    let ff = cfg.d_ff;
    let scale = c::<T>(1.0 / (dh as f64).sqrt());

    let mut dx = layer_norm_backward(
        d_hidden,
        &cache.lnf,
        &params.final_gain.data,
        &mut grads.final_gain.data,
        &mut grads.final_bias.data,
        d,
    );

    for (li, (lp, lc)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        let lg = &mut grads.layers[li];

        // feed-forward branch
        let mut dp = dx.clone();
        if let Some(m) = &lc.proj_mask {
            dp.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
        }
        accumulate_at_d(&mut lg.proj_weight.data, &lc.g, &dp, n, ff, d);
        accumulate_rows(&mut lg.proj_bias.data, &dp, d);
        let dg = matmul_bt(&dp, &lp.proj_weight.data, n, d, ff);
        let df: Vec<T> = dg.iter().zip(&lc.f).map(|(&g, &f)| g * gelu_grad(f)).collect();
        accumulate_at_d(&mut lg.fc_weight.data, &lc.c, &df, n, d, ff);
        accumulate_rows(&mut lg.fc_bias.data, &df, ff);
        let dcn = matmul_bt(&df, &lp.fc_weight.data, n, ff, d);
        let dmid = layer_norm_backward(
            &dcn,
            &lc.ln2,
            &lp.ln2_gain.data,
            &mut lg.ln2_gain.data,
            &mut lg.ln2_bias.data,
            d,
        );
        dx.iter_mut().zip(&dmid).for_each(|(a, &b)| *a += b);

        // attention branch
        accumulate_at_d(&mut lg.out_weight.data, &lc.y, &dx, n, d, d);
        accumulate_rows(&mut lg.out_bias.data, &dx, d);
        let dy = matmul_bt(&dx, &lp.out_weight.data, n, d, d);

        let mut dqkv = vec![T::zero(); n * 3 * d];
        let mut dp_row = vec![T::zero(); n];
        for head in 0..h {
            let qo = head * dh;
            let ko = d + head * dh;
            let vo = 2 * d + head * dh;
            for i in 0..n {
                let dyi = &dy[i * d + qo..i * d + qo + dh];
                let base = head * n * n + i * n;
                let mut weighted = T::zero();
                for j in 0..=i {
                    let m = lc.att_mask.as_ref().map_or(T::one(), |m| m[base + j]);
                    let v = &lc.qkv[j * 3 * d + vo..j * 3 * d + vo + dh];
                    let dpd = ops::dot(dyi, v);
                    let pd = lc.att[base + j] * m;
                    if pd != T::zero() {
                        let dv = &mut dqkv[j * 3 * d + vo..j * 3 * d + vo + dh];
                        for (g, &yy) in dv.iter_mut().zip(dyi) {
                            *g += pd * yy;
                        }
                    }
                    dp_row[j] = dpd * m;
                    weighted += lc.att[base + j] * dp_row[j];
                }
                for j in 0..=i {
                    let ds = lc.att[base + j] * (dp_row[j] - weighted) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    for t in 0..dh {
                        let kj = lc.qkv[j * 3 * d + ko + t];
                        let qi = lc.qkv[i * 3 * d + qo + t];
                        dqkv[i * 3 * d + qo + t] += ds * kj;
                        dqkv[j * 3 * d + ko + t] += ds * qi;
                    }
                }
            }
        }
        accumulate_at_d(&mut lg.qkv_weight.data, &lc.a, &dqkv, n, d, 3 * d);
        accumulate_rows(&mut lg.qkv_bias.data, &dqkv, 3 * d);
        let da = matmul_bt(&dqkv, &lp.qkv_weight.data, n, 3 * d, d);
        let din = layer_norm_backward(
            &da,
            &lc.ln1,
            &lp.ln1_gain.data,
            &mut lg.ln1_gain.data,
            &mut lg.ln1_bias.data,
            d,
        );
        dx.iter_mut().zip(&din).for_each(|(a, &b)| *a += b);
    }

    if let Some(m) = &cache.emb_mask {
        dx.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
    }
    for (t, &id) in cache.ids.iter().enumerate() {
        let row = &dx[t * d..(t + 1) * d];
        let tok = &mut grads.token_embedding.data[id as usize * d..(id as usize + 1) * d];
        tok.iter_mut().zip(row).for_each(|(g, &v)| *g += v);
        let pos = &mut grads.position_embedding.data[t * d..(t + 1) * d];
        pos.iter_mut().zip(row).for_each(|(g, &v)| *g += v);
    }
}

/// Deterministic forward pass (dropout off).
pub fn forward<T: Scalar>(params: &ModelParams<T>, ids: &[TokenId]) -> Result<ForwardOutput<T>, ModelError> {
    let cache = run(params, ids, None)?;
    let n = cache.len();
    Ok(ForwardOutput {
        logits: logits(params, &cache.hidden, n),
        hidden: cache.hidden,
        seq_len: n,
    })
}

/// Next-token logits at the final position only, widened to f64.
pub fn next_token_logits<T: Scalar>(params: &ModelParams<T>, ids: &[TokenId]) -> Result<Vec<f64>, ModelError> {
    let cache = run(params, ids, None)?;
    let d = params.config.d_model;
    let last = &cache.hidden[(cache.len() - 1) * d..];
    Ok(logits(params, last, 1).iter().map(|x| x.to_f64().unwrap()).collect())
}

pub fn forward_traced<T: Scalar>(params: &ModelParams<T>, ids: &[TokenId]) -> Result<ForwardTrace<T>, ModelError> {
    let cache = run(params, ids, None)?;
    let n = cache.len();
    let h = params.config.n_heads;
    let attention = cache
        .layers
        .iter()
        .map(|l| (0..h).map(|k| l.att[k * n * n..(k + 1) * n * n].to_vec()).collect())
        .collect();
    Ok(ForwardTrace {
        output: ForwardOutput {
            logits: logits(params, &cache.hidden, n),
            hidden: cache.hidden,
            seq_len: n,
        },
        attention,
    })
}
