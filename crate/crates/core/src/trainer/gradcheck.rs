use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TrainingExample;
use crate::model::{
    loss_and_grad, multitask_loss, Distractors, LossWeights, ModelError, ModelParams, Variant, AFFECT_HEAD_PREFIX,
    CHOICE_HEAD_PREFIX,
};

/// Relative errors use `max(|analytic|, |numeric|, REL_FLOOR)` as the
/// denominator so coordinates with vanishing gradient are judged absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub max_rel_error: f64,
    pub probes: Vec<Probe>,
}

/// Compares the analytic gradient of the total loss with central
/// differences on `n_coords` sampled coordinates (at least one per probed
/// tensor). Dropout is off. Head tensors are skipped for the
/// language-model-only variant, whose loss ignores them.
pub fn grad_check(
    params: &ModelParams<f64>,
    batch: &[TrainingExample],
    distractors: Distractors<'_>,
    weights: LossWeights,
    epsilon: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let (_, grads) = loss_and_grad(params, batch, distractors, weights, None)?;
    let lm_only = params.config.variant == Variant::LmOnly;
    let names: Vec<(String, usize)> = params
        .tensors()
        .into_iter()
        .filter(|(n, _)| !(lm_only && (n.starts_with(AFFECT_HEAD_PREFIX) || n.starts_with(CHOICE_HEAD_PREFIX))))
        .map(|(n, t)| (n, t.len()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<(usize, usize)> = names
        .iter()
        .enumerate()
        .map(|(ti, (_, len))| (ti, rng.random_range(0..*len)))
        .collect();
    while coords.len() < n_coords {
        let ti = rng.random_range(0..names.len());
        coords.push((ti, rng.random_range(0..names[ti].1)));
    }

    let grad_map = grads.tensors();
    let mut probe = params.clone();
    let mut probes = Vec::with_capacity(coords.len());
    for (ti, index) in coords {
        let name = &names[ti].0;
        let mut eval = |delta: f64| -> Result<f64, ModelError> {
            set(&mut probe, name, index, params, delta);
            let l = multitask_loss(&probe, batch, distractors, weights)?.total;
            set(&mut probe, name, index, params, 0.0);
            Ok(l)
        };
        let numeric = (eval(epsilon)? - eval(-epsilon)?) / (2.0 * epsilon);
        let analytic = grad_map
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.data[index])
            .expect("gradient tensor present");
        let rel_error = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        probes.push(Probe {
            tensor: name.clone(),
            index,
            analytic,
            numeric,
            rel_error,
        });
    }
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        epsilon,
        max_rel_error,
        probes,
    })
}

fn set(probe: &mut ModelParams<f64>, name: &str, index: usize, base: &ModelParams<f64>, delta: f64) {
    let original = base
        .tensors()
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t.data[index])
        .unwrap();
    for (n, t) in probe.tensors_mut() {
        if n == name {
            t.data[index] = original + delta;
        }
    }
}
