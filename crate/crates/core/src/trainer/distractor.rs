use std::collections::HashSet;

use rand::Rng;

use super::TrainError;
use crate::corpus::{RdgCorpus, TrainingExample, Utterance};

/// Uniform draw over utterances from a different scenario.
pub fn sample_distractor<'c, R: Rng + ?Sized>(
    example: &Utterance,
    corpus: &'c RdgCorpus,
    rng: &mut R,
) -> Result<&'c Utterance, TrainError> {
    if corpus.scenarios().len() < 2 {
        return Err(TrainError::NoDistractor("corpus has fewer than two scenarios".into()));
    }
    let eligible: Vec<&Utterance> = corpus
        .utterances()
        .iter()
        .filter(|u| u.scenario_id != example.scenario_id)
        .collect();
    if eligible.is_empty() {
        return Err(TrainError::NoDistractor(format!(
            "no utterance outside scenario {}",
            example.scenario_id
        )));
    }
    Ok(eligible[rng.random_range(0..eligible.len())])
}

/// Distractor sampling over prepared examples, keyed by their group.
pub(crate) struct DistractorPool<'a> {
    examples: &'a [TrainingExample],
}

impl<'a> DistractorPool<'a> {
    pub fn new(examples: &'a [TrainingExample]) -> Result<Self, TrainError> {
        let groups: HashSet<&str> = examples.iter().map(|e| e.group.as_str()).collect();
        if groups.len() < 2 {
            return Err(TrainError::NoDistractor(
                "training data spans fewer than two scenarios".into(),
            ));
        }
        Ok(Self { examples })
    }

    /// Rejection sampling: uniform over examples whose group differs.
    pub fn sample<R: Rng + ?Sized>(&self, group: &str, rng: &mut R) -> &'a TrainingExample {
        loop {
            let cand = &self.examples[rng.random_range(0..self.examples.len())];
            if cand.group != group {
                return cand;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AffectTarget, Scenario, Source, SplitTag};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus(n_scenarios: usize, per: usize) -> RdgCorpus {
        let scenarios = (0..n_scenarios)
            .map(|i| Scenario {
                id: format!("s{i}"),
                description: "d".into(),
                affect_target: AffectTarget::Excited,
                split_tag: SplitTag::Train,
            })
            .collect();
        let utterances = (0..n_scenarios * per)
            .map(|i| Utterance {
                id: format!("u{i}"),
                scenario_id: format!("s{}", i / per),
                affect_target: AffectTarget::Excited,
                text: format!("t{i}"),
                source: Source::Human,
                aggregated: None,
            })
            .collect();
        RdgCorpus::new(scenarios, utterances).unwrap()
    }

    #[test]
    fn never_same_scenario() {
        let c = corpus(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for u in c.utterances() {
            for _ in 0..20 {
                let d = sample_distractor(u, &c, &mut rng).unwrap();
                assert_ne!(d.scenario_id, u.scenario_id);
            }
        }
    }

    #[test]
    fn single_scenario_is_error() {
        let c = corpus(1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_distractor(&c.utterances()[0], &c, &mut rng).is_err());
    }

    #[test]
    fn frequencies_uniform_by_chi_square() {
        // 2 scenarios: the example's own (3 utterances) and 4 eligible ones.
        let scenarios = vec![
            Scenario {
                id: "a".into(),
                description: "d".into(),
                affect_target: AffectTarget::Excited,
                split_tag: SplitTag::Train,
            },
            Scenario {
                id: "b".into(),
                description: "d".into(),
                affect_target: AffectTarget::Excited,
                split_tag: SplitTag::Train,
            },
        ];
        let utterances = (0..7)
            .map(|i| Utterance {
                id: format!("u{i}"),
                scenario_id: if i < 3 { "a".into() } else { "b".into() },
                affect_target: AffectTarget::Excited,
                text: format!("t{i}"),
                source: Source::Human,
                aggregated: None,
            })
            .collect();
        let c = RdgCorpus::new(scenarios, utterances).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let d = sample_distractor(&c.utterances()[0], &c, &mut rng).unwrap();
            let idx: usize = d.id[1..].parse().unwrap();
            counts[idx - 3] += 1;
        }
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // chi-square critical value, 3 degrees of freedom, alpha = 0.01
        assert!(chi2 < 11.344_866_730_144_373, "chi2 = {chi2}, counts {counts:?}");
    }
}
