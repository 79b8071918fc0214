use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ops::c;
use super::{AffectMode, ModelConfig, ModelError, Scalar, Variant};

pub(crate) const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    fn normal(shape: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let dist = Normal::new(0.0, INIT_STD).expect("valid normal");
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| c(dist.sample(rng))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from(x).expect("finite value")).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_gain: Tensor<T>,
    pub ln1_bias: Tensor<T>,
    /// `[d, 3d]`, columns ordered query | key | value.
    pub qkv_weight: Tensor<T>,
    pub qkv_bias: Tensor<T>,
    pub out_weight: Tensor<T>,
    pub out_bias: Tensor<T>,
    pub ln2_gain: Tensor<T>,
    pub ln2_bias: Tensor<T>,
    pub fc_weight: Tensor<T>,
    pub fc_bias: Tensor<T>,
    pub proj_weight: Tensor<T>,
    pub proj_bias: Tensor<T>,
}

/// All trainable tensors. The language-model head is tied to
/// `token_embedding`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub token_embedding: Tensor<T>,
    pub position_embedding: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub final_gain: Tensor<T>,
    pub final_bias: Tensor<T>,
    /// `[d, 1]` for regression, `[d, K]` for classification.
    pub affect_weight: Tensor<T>,
    pub affect_bias: Tensor<T>,
    pub choice_weight: Tensor<T>,
    pub choice_bias: Tensor<T>,
}

pub const AFFECT_HEAD_PREFIX: &str = "affect_head.";
pub const CHOICE_HEAD_PREFIX: &str = "choice_head.";

macro_rules! named_tensors {
    ($self:ident, $iter:ident, $($r:tt)*) => {{
        let mut out = vec![
            ("token_embedding".to_string(), $($r)* $self.token_embedding),
            ("position_embedding".to_string(), $($r)* $self.position_embedding),
        ];
        for (i, l) in $self.layers.$iter().enumerate() {
            out.push((format!("layers.{i}.ln1_gain"), $($r)* l.ln1_gain));
            out.push((format!("layers.{i}.ln1_bias"), $($r)* l.ln1_bias));
            out.push((format!("layers.{i}.qkv_weight"), $($r)* l.qkv_weight));
            out.push((format!("layers.{i}.qkv_bias"), $($r)* l.qkv_bias));
            out.push((format!("layers.{i}.out_weight"), $($r)* l.out_weight));
            out.push((format!("layers.{i}.out_bias"), $($r)* l.out_bias));
            out.push((format!("layers.{i}.ln2_gain"), $($r)* l.ln2_gain));
            out.push((format!("layers.{i}.ln2_bias"), $($r)* l.ln2_bias));
            out.push((format!("layers.{i}.fc_weight"), $($r)* l.fc_weight));
            out.push((format!("layers.{i}.fc_bias"), $($r)* l.fc_bias));
            out.push((format!("layers.{i}.proj_weight"), $($r)* l.proj_weight));
            out.push((format!("layers.{i}.proj_bias"), $($r)* l.proj_bias));
        }
        out.push(("final_gain".to_string(), $($r)* $self.final_gain));
        out.push(("final_bias".to_string(), $($r)* $self.final_bias));
        out.push(("affect_head.weight".to_string(), $($r)* $self.affect_weight));
        out.push(("affect_head.bias".to_string(), $($r)* $self.affect_bias));
        out.push(("choice_head.weight".to_string(), $($r)* $self.choice_weight));
        out.push(("choice_head.bias".to_string(), $($r)* $self.choice_bias));
        out
    }};
}

impl<T: Scalar> ModelParams<T> {
    /// Tensors in canonical order with stable dotted names.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        named_tensors!(self, iter, &)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        named_tensors!(self, iter_mut, &mut)
    }

    /// Zero tensors of identical shapes, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor<T>| Tensor::zeros(&t.shape);
        Self {
            config: self.config.clone(),
            token_embedding: z(&self.token_embedding),
            position_embedding: z(&self.position_embedding),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_gain: z(&l.ln1_gain),
                    ln1_bias: z(&l.ln1_bias),
                    qkv_weight: z(&l.qkv_weight),
                    qkv_bias: z(&l.qkv_bias),
                    out_weight: z(&l.out_weight),
                    out_bias: z(&l.out_bias),
                    ln2_gain: z(&l.ln2_gain),
                    ln2_bias: z(&l.ln2_bias),
                    fc_weight: z(&l.fc_weight),
                    fc_bias: z(&l.fc_bias),
                    proj_weight: z(&l.proj_weight),
                    proj_bias: z(&l.proj_bias),
                })
                .collect(),
            final_gain: z(&self.final_gain),
            final_bias: z(&self.final_bias),
            affect_weight: z(&self.affect_weight),
            affect_bias: z(&self.affect_bias),
            choice_weight: z(&self.choice_weight),
            choice_bias: z(&self.choice_bias),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            token_embedding: self.token_embedding.cast(),
            position_embedding: self.position_embedding.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_gain: l.ln1_gain.cast(),
                    ln1_bias: l.ln1_bias.cast(),
                    qkv_weight: l.qkv_weight.cast(),
                    qkv_bias: l.qkv_bias.cast(),
                    out_weight: l.out_weight.cast(),
                    out_bias: l.out_bias.cast(),
                    ln2_gain: l.ln2_gain.cast(),
                    ln2_bias: l.ln2_bias.cast(),
                    fc_weight: l.fc_weight.cast(),
                    fc_bias: l.fc_bias.cast(),
                    proj_weight: l.proj_weight.cast(),
                    proj_bias: l.proj_bias.cast(),
                })
                .collect(),
            final_gain: self.final_gain.cast(),
            final_bias: self.final_bias.cast(),
            affect_weight: self.affect_weight.cast(),
            affect_bias: self.affect_bias.cast(),
            choice_weight: self.choice_weight.cast(),
            choice_bias: self.choice_bias.cast(),
        }
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }

    /// Expected `(name, shape)` manifest for a config.
    pub fn manifest(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let skeleton = Self::skeleton(config);
        skeleton
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape.clone()))
            .collect()
    }

    fn skeleton(config: &ModelConfig) -> Self {
        let (v, d, l, ff) = (config.vocab_size, config.d_model, config.max_seq_len, config.d_ff);
        let k = config.affect_mode.outputs();
        Self {
            config: config.clone(),
            token_embedding: Tensor::zeros(&[v, d]),
            position_embedding: Tensor::zeros(&[l, d]),
            layers: (0..config.n_layers)
                .map(|_| LayerParams {
                    ln1_gain: Tensor::filled(&[d], T::one()),
                    ln1_bias: Tensor::zeros(&[d]),
                    qkv_weight: Tensor::zeros(&[d, 3 * d]),
                    qkv_bias: Tensor::zeros(&[3 * d]),
                    out_weight: Tensor::zeros(&[d, d]),
                    out_bias: Tensor::zeros(&[d]),
                    ln2_gain: Tensor::filled(&[d], T::one()),
                    ln2_bias: Tensor::zeros(&[d]),
                    fc_weight: Tensor::zeros(&[d, ff]),
                    fc_bias: Tensor::zeros(&[ff]),
                    proj_weight: Tensor::zeros(&[ff, d]),
                    proj_bias: Tensor::zeros(&[d]),
                })
                .collect(),
            final_gain: Tensor::filled(&[d], T::one()),
            final_bias: Tensor::zeros(&[d]),
            affect_weight: Tensor::zeros(&[d, k]),
            affect_bias: Tensor::zeros(&[k]),
            choice_weight: Tensor::zeros(&[d, 1]),
            choice_bias: Tensor::zeros(&[1]),
        }
    }

    /// Assembles params from named tensors in manifest order, checking shapes.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self, String> {
        let mut params = Self::skeleton(config);
        let expected = Self::manifest(config);
        if tensors.len() != expected.len() {
            return Err(format!("expected {} tensors, found {}", expected.len(), tensors.len()));
        }
        for ((name, slot), (given_name, tensor)) in params.tensors_mut().into_iter().zip(tensors) {
            if name != given_name {
                return Err(format!("expected tensor {name}, found {given_name}"));
            }
            if slot.shape != tensor.shape || tensor.data.len() != slot.data.len() {
                return Err(format!(
                    "tensor {name}: expected shape {:?}, found {:?}",
                    slot.shape, tensor.shape
                ));
            }
            *slot = tensor;
        }
        Ok(params)
    }
}

pub(crate) fn is_weight(name: &str) -> bool {
    name.ends_with("_weight") || name.ends_with(".weight") || name.ends_with("_embedding")
}

/// Scaled-normal weights (std 0.02), unit normalization gains and zero biases.
/// Deterministic for a given seed.
pub fn init<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::<T>::skeleton(config);
    for (name, tensor) in params.tensors_mut() {
        if is_weight(&name) {
            *tensor = Tensor::normal(&tensor.shape, &mut rng);
        }
    }
    Ok(params)
}

/// Replaces only the affect head with a fresh draw sized for `new_mode`.
pub fn reinit_affect_head<T: Scalar>(
    params: &ModelParams<T>,
    new_mode: AffectMode,
    seed: u64,
) -> Result<ModelParams<T>, ModelError> {
    if params.config.variant != Variant::Multitask {
        return Err(ModelError::NotMultitask);
    }
    let mut config = params.config.clone();
    config.affect_mode = new_mode;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.d_model;
    let k = new_mode.outputs();
    let mut out = params.clone();
    out.config = config;
    out.affect_weight = Tensor::normal(&[d, k], &mut rng);
    out.affect_bias = Tensor::zeros(&[k]);
    Ok(out)
}
