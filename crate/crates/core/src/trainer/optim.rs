use crate::model::{ModelParams, Scalar};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adaptive-moment optimizer state with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub step: u64,
    pub learning_rate: f64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ModelParams<T>, learning_rate: f64) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            learning_rate,
        }
    }

    /// Resets moments of the named tensors (used after a head is replaced
    /// with a different shape).
    pub fn reset_tensors(&mut self, params: &ModelParams<T>, prefix: &str) {
        let fresh = params.zeros_like();
        for moments in [&mut self.m, &mut self.v] {
            moments.config = params.config.clone();
            for ((name, t), (_, z)) in moments.tensors_mut().into_iter().zip(fresh.tensors()) {
                if name.starts_with(prefix) {
                    *t = z.clone();
                }
            }
        }
    }

    pub fn update(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from(BETA1).unwrap();
        let b2 = T::from(BETA2).unwrap();
        let one = T::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let lr = T::from(self.learning_rate).unwrap();
        let eps = T::from(EPSILON).unwrap();
        let m_all = self.m.tensors_mut();
        let v_all = self.v.tensors_mut();
        for ((((_, p), (_, g)), (_, m)), (_, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(m_all)
            .zip(v_all)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gi;
                v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

pub fn global_norm<T: Scalar>(grads: &ModelParams<T>) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.data.iter())
        .map(|x| {
            let x = x.to_f64().unwrap();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Scales gradients so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut ModelParams<T>, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = T::from(max_norm / norm).unwrap();
        for (_, t) in grads.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init, ModelConfig};
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = init::<f32>(&ModelConfig::micro(30, 8), 1).unwrap();
        let before = p.clone();
        let mut adam = Adam::new(&p, 3e-4);
        let zeros = p.zeros_like();
        adam.update(&mut p, &zeros);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = init::<f64>(&ModelConfig::micro(30, 8), 1).unwrap();
        let before = p.clone();
        let mut adam = Adam::new(&p, 1e-3);
        let mut g = p.zeros_like();
        g.final_bias.data[0] = 5.0;
        adam.update(&mut p, &g);
        // bias-corrected first step is lr * sign(g)
        assert!((before.final_bias.data[0] - p.final_bias.data[0] - 1e-3).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn clipping_bounds_global_norm(vals in prop::collection::vec(-100.0f64..100.0, 16), max in 0.01f64..10.0) {
            let p = init::<f64>(&ModelConfig::micro(30, 8), 1).unwrap();
            let mut g = p.zeros_like();
            g.final_gain.data.copy_from_slice(&vals);
            clip_global_norm(&mut g, max);
            prop_assert!(global_norm(&g) <= max + 1e-9);
        }
    }
}
