use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// Modified n-gram precisions `p_1..p_N` (smoothed when requested).
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub score: f64,
    pub candidate_len: usize,
    pub reference_len: usize,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU against one or more references with uniform weights.
///
/// Candidate n-gram counts are clipped by the maximum count of that n-gram in
/// any single reference. The brevity penalty uses the reference length
/// closest to the candidate length (ties go to the shorter reference). With
/// `smooth`, precisions for `n >= 2` get add-one smoothing on numerator and
/// denominator.
pub fn bleu<T: Eq + Hash>(
    candidate: &[T],
    references: &[Vec<T>],
    max_n: usize,
    smooth: bool,
) -> Result<BleuReport, MetricsError> {
    if references.is_empty() {
        return Err(MetricsError::NoReferences);
    }
    if candidate.is_empty() {
        return Err(MetricsError::EmptyCandidate);
    }
    if max_n == 0 {
        return Err(MetricsError::InvalidArgument("max_n must be at least 1".into()));
    }

    let mut precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let ref_counts: Vec<_> = references.iter().map(|r| ngram_counts(r, n)).collect();
        let total: usize = cand.values().sum();
        let matched: usize = cand
            .iter()
            .map(|(gram, &count)| {
                let max_ref = ref_counts
                    .iter()
                    .map(|rc| rc.get(gram).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                count.min(max_ref)
            })
            .sum();
        let p = if smooth && n >= 2 {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        } else if total == 0 {
            0.0
        } else {
            matched as f64 / total as f64
        };
        precisions.push(p);
    }

    let c = candidate.len();
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty references");
    let brevity_penalty = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };

    let score = if precisions.contains(&0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64;
        brevity_penalty * log_mean.exp()
    };
    Ok(BleuReport {
        precisions,
        brevity_penalty,
        score,
        candidate_len: c,
        reference_len: r,
    })
}

/// Mean of smoothed sentence-level BLEU over `(candidate, references)` pairs.
pub fn average_bleu<T: Eq + Hash>(pairs: &[(Vec<T>, Vec<Vec<T>>)], max_n: usize) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sum = 0.0;
    for (cand, refs) in pairs {
        sum += bleu(cand, refs, max_n, true)?.score;
    }
    Ok(sum / pairs.len() as f64)
}
