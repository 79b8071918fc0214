//! Automatic evaluation: perplexity, BLEU, affect rounding and per-class F1.

mod bleu;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{average_bleu, bleu, BleuReport};

use crate::corpus::TrainingExample;
use crate::model::{sequence_nll, ModelError, ModelParams, Scalar};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no target tokens to score")]
    NoTargets,
    #[error("reference list is empty")]
    NoReferences,
    #[error("candidate is empty")]
    EmptyCandidate,
    #[error("input is empty")]
    Empty,
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("affect value {0} outside [-4, 4]")]
    AffectOutOfRange(i32),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `exp` of the mean per-token negative log-likelihood, pooling
/// `(nll_sum, token_count)` pairs across sequences.
pub fn pooled_perplexity(parts: &[(f64, usize)]) -> Result<f64, MetricsError> {
    let tokens: usize = parts.iter().map(|p| p.1).sum();
    if tokens == 0 {
        return Err(MetricsError::NoTargets);
    }
    let nll: f64 = parts.iter().map(|p| p.0).sum();
    Ok((nll / tokens as f64).exp())
}

/// Per-token perplexity over all target positions of a dataset.
pub fn perplexity<T: Scalar>(params: &ModelParams<T>, dataset: &[TrainingExample]) -> Result<f64, MetricsError> {
    if dataset.is_empty() {
        return Err(MetricsError::Empty);
    }
    let parts = dataset
        .iter()
        .map(|ex| sequence_nll(params, ex))
        .collect::<Result<Vec<_>, _>>()?;
    pooled_perplexity(&parts)
}

/// Rounds half away from zero, then clamps to [-4, 4].
pub fn round_affect(x: f64) -> i32 {
    (x.round() as i32).clamp(-4, 4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffectClass {
    Excited,
    Neutral,
    Frustrated,
}

impl AffectClass {
    pub const ALL: [AffectClass; 3] = [AffectClass::Excited, AffectClass::Neutral, AffectClass::Frustrated];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AffectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AffectClass::Excited => "excited",
            AffectClass::Neutral => "neutral",
            AffectClass::Frustrated => "frustrated",
        })
    }
}

pub fn affect_class(value: i32) -> Result<AffectClass, MetricsError> {
    match value {
        -4..=-1 => Ok(AffectClass::Frustrated),
        0 => Ok(AffectClass::Neutral),
        1..=4 => Ok(AffectClass::Excited),
        _ => Err(MetricsError::AffectOutOfRange(value)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<ClassScores>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1 over class indices `0..n_classes`
/// (0/0 counts as 0).
pub fn f1_report(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<F1Report, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&bad) = predicted.iter().chain(truth).find(|&&c| c >= n_classes) {
        return Err(MetricsError::InvalidArgument(format!(
            "class {bad} outside 0..{n_classes}"
        )));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let per_class: Vec<ClassScores> = (0..n_classes)
        .map(|k| {
            let tp = confusion[k][k];
            let support: usize = confusion[k].iter().sum();
            let predicted_k: usize = confusion.iter().map(|row| row[k]).sum();
            let precision = ratio(tp, predicted_k);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let total = truth.len();
    let correct: usize = (0..n_classes).map(|k| confusion[k][k]).sum();
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / n_classes as f64;
    let weighted_f1 = per_class.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / total as f64;
    Ok(F1Report {
        per_class,
        accuracy: ratio(correct, total),
        macro_f1,
        weighted_f1,
        confusion,
    })
}

/// F1 over the three affect classes, indexed as in [`AffectClass::ALL`].
pub fn affect_f1_report(predicted: &[AffectClass], truth: &[AffectClass]) -> Result<F1Report, MetricsError> {
    let p: Vec<usize> = predicted.iter().map(|c| c.index()).collect();
    let t: Vec<usize> = truth.iter().map(|c| c.index()).collect();
    f1_report(&p, &t, AffectClass::ALL.len())
}

/// Fraction of items whose unique arg-max score is the true index. Ties
/// count as incorrect.
pub fn mc_accuracy(scores: &[Vec<f64>], truth: &[usize]) -> Result<f64, MetricsError> {
    if scores.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), truth.len()));
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = scores
        .iter()
        .zip(truth)
        .filter(|(s, &t)| {
            let Some(&best) = s.get(t) else { return false };
            s.iter().enumerate().all(|(i, &v)| i == t || v < best)
        })
        .count();
    Ok(correct as f64 / scores.len() as f64)
}

/// Per-utterance automatic metric record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub utterance_id: String,
    pub model: String,
    pub scenario_id: String,
    pub affect: crate::corpus::AffectTarget,
    pub bleu: f64,
    pub n_references: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init, ModelConfig};
    use proptest::prelude::*;

    #[test]
    fn perplexity_analytic_cases() {
        // exp((ln 2 + ln 8) / 2) = 4 with one token per sequence
        let p = pooled_perplexity(&[(2f64.ln(), 1), (8f64.ln(), 1)]).unwrap();
        assert!((p - 4.0).abs() < 1e-12);
        assert_eq!(pooled_perplexity(&[(0.0, 5)]).unwrap(), 1.0);
        assert!(matches!(pooled_perplexity(&[(0.0, 0)]), Err(MetricsError::NoTargets)));
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        let mut params = init::<f64>(&ModelConfig::micro(100, 16), 3).unwrap();
        params.token_embedding.data.iter_mut().for_each(|x| *x = 0.0);
        let ex = TrainingExample {
            input_ids: vec![2, 5, 20, 4, 30, 31, 3],
            target_mask: vec![false, false, false, false, true, true, true],
            affect: None,
            context_len: 4,
            group: "s".into(),
        };
        let ppl = perplexity(&params, &[ex.clone(), ex]).unwrap();
        assert!((ppl - 100.0).abs() < 1e-6);
    }

    #[test]
    fn rounding_and_classes() {
        assert_eq!(round_affect(0.6), 1);
        assert_eq!(round_affect(-1.2), -1);
        assert_eq!(round_affect(7.3), 4);
        assert_eq!(round_affect(-9.0), -4);
        assert_eq!(round_affect(0.5), 1);
        assert_eq!(round_affect(-0.5), -1);
        assert_eq!(affect_class(-3).unwrap(), AffectClass::Frustrated);
        assert_eq!(affect_class(0).unwrap(), AffectClass::Neutral);
        assert_eq!(affect_class(2).unwrap(), AffectClass::Excited);
        assert!(affect_class(5).is_err());
    }

    #[test]
    fn f1_identity() {
        let labels = [0, 1, 2, 2, 1, 0];
        let r = f1_report(&labels, &labels, 3).unwrap();
        assert!(r.per_class.iter().all(|c| c.f1 == 1.0));
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn f1_hand_case() {
        // class 0: TP=2, FP=1, FN=1
        let truth = [0, 0, 0, 1, 1];
        let pred = [0, 0, 1, 0, 1];
        let r = f1_report(&pred, &truth, 2).unwrap();
        let c0 = r.per_class[0];
        assert!((c0.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((c0.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((c0.f1 - 2.0 / 3.0).abs() < 1e-15);
        for (k, row) in r.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), r.per_class[k].support);
        }
    }

    #[test]
    fn constant_predictor_zero_f1() {
        use AffectClass::*;
        let truth = [Excited, Frustrated, Excited, Frustrated];
        let pred = [Excited; 4];
        let r = affect_f1_report(&pred, &truth).unwrap();
        assert_eq!(r.per_class[Frustrated.index()].f1, 0.0);
        assert_eq!(r.per_class[Neutral.index()].f1, 0.0);
        assert!(r.per_class[Excited.index()].f1 > 0.0);
        assert!(f1_report(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn mc_accuracy_rules() {
        assert_eq!(mc_accuracy(&[vec![2.0, 1.0], vec![0.0, 3.0]], &[0, 1]).unwrap(), 1.0);
        assert_eq!(mc_accuracy(&[vec![1.0, 1.0], vec![0.5, 0.5]], &[0, 1]).unwrap(), 0.0);
        let scores: Vec<Vec<f64>> = (0..50)
            .map(|i| if i < 41 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        assert!((mc_accuracy(&scores, &[0; 50]).unwrap() - 0.82).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn round_affect_is_odd(x in -10.0f64..10.0) {
            prop_assume!((x.abs().fract() - 0.5).abs() > 1e-9);
            prop_assert_eq!(round_affect(-x), -round_affect(x));
        }

        #[test]
        fn macro_recall_equals_accuracy_for_balanced_supports(
            preds in prop::collection::vec(0usize..3, 12),
        ) {
            let truth: Vec<usize> = (0..12).map(|i| i % 3).collect();
            let r = f1_report(&preds, &truth, 3).unwrap();
            let macro_recall = r.per_class.iter().map(|c| c.recall).sum::<f64>() / 3.0;
            prop_assert!((macro_recall - r.accuracy).abs() < 1e-12);
        }
    }
}
