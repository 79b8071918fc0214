use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, RdgCorpus};

/// Scenario-level partition of an RDG corpus.
///
/// `train`, `test_seen` and `test_unseen` partition the scenario ids.
/// Seen test scenarios contribute part of their utterances to training;
/// unseen scenarios contribute none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub test_seen: Vec<String>,
    pub test_unseen: Vec<String>,
    pub seed: u64,
    pub train_utterances: Vec<String>,
    pub test_utterances: Vec<String>,
}

impl CorpusSplit {
    /// Seen test scenarios followed by unseen ones.
    pub fn evaluation_scenarios(&self) -> Vec<String> {
        self.test_seen.iter().chain(&self.test_unseen).cloned().collect()
    }
}

/// Chooses `n_unseen` held-out scenarios uniformly, then the same number of
/// seen test scenarios (fewer if not enough remain). Half (rounded up) of each
/// seen test scenario's utterances go to the test side.
pub fn make_split(corpus: &RdgCorpus, seed: u64, n_unseen: usize) -> Result<CorpusSplit, CorpusError> {
    let total = corpus.scenarios().len();
    if n_unseen >= total {
        return Err(CorpusError::TooManyUnseen { n_unseen, total });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<String> = corpus.scenarios().iter().map(|s| s.id.clone()).collect();
    ids.sort();
    ids.shuffle(&mut rng);

    let n_seen = n_unseen.min(total - n_unseen);
    let mut test_unseen = ids[..n_unseen].to_vec();
    let mut test_seen = ids[n_unseen..n_unseen + n_seen].to_vec();
    let mut train = ids[n_unseen + n_seen..].to_vec();
    test_unseen.sort();
    test_seen.sort();
    train.sort();

    let by_scenario = corpus.utterances_by_scenario();
    let mut train_utterances = Vec::new();
    let mut test_utterances = Vec::new();
    for sid in &train {
        if let Some(us) = by_scenario.get(sid.as_str()) {
            train_utterances.extend(us.iter().map(|u| u.id.clone()));
        }
    }
    for sid in &test_seen {
        let mut us: Vec<String> = by_scenario
            .get(sid.as_str())
            .map(|v| v.iter().map(|u| u.id.clone()).collect())
            .unwrap_or_default();
        us.sort();
        us.shuffle(&mut rng);
        let n_test = us.len().div_ceil(2);
        test_utterances.extend(us[..n_test].iter().cloned());
        train_utterances.extend(us[n_test..].iter().cloned());
    }
    for sid in &test_unseen {
        if let Some(us) = by_scenario.get(sid.as_str()) {
            test_utterances.extend(us.iter().map(|u| u.id.clone()));
        }
    }
    train_utterances.sort();
    test_utterances.sort();

    Ok(CorpusSplit {
        train,
        test_seen,
        test_unseen,
        seed,
        train_utterances,
        test_utterances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AffectTarget, Scenario, Source, SplitTag, Utterance};
    use std::collections::HashSet;

    fn corpus(n: usize) -> RdgCorpus {
        let scenarios = (0..n)
            .map(|i| Scenario {
                id: format!("s{i}"),
                description: format!("scenario {i}"),
                affect_target: AffectTarget::Excited,
                split_tag: SplitTag::Train,
            })
            .collect();
        let utterances = (0..n * 4)
            .map(|i| Utterance {
                id: format!("u{i}"),
                scenario_id: format!("s{}", i % n),
                affect_target: AffectTarget::ALL[i % 3],
                text: format!("line {i}"),
                source: Source::Human,
                aggregated: None,
            })
            .collect();
        RdgCorpus::new(scenarios, utterances).unwrap()
    }

    #[test]
    fn deterministic_for_seed() {
        let c = corpus(10);
        assert_eq!(make_split(&c, 7, 3).unwrap(), make_split(&c, 7, 3).unwrap());
    }

    #[test]
    fn too_many_unseen() {
        let c = corpus(10);
        assert!(matches!(make_split(&c, 7, 10), Err(CorpusError::TooManyUnseen { .. })));
    }

    #[test]
    fn partitions_scenarios_and_hides_unseen() {
        let c = corpus(10);
        for seed in 0..20 {
            let s = make_split(&c, seed, 3).unwrap();
            let a: HashSet<_> = s.train.iter().collect();
            let b: HashSet<_> = s.test_seen.iter().collect();
            let u: HashSet<_> = s.test_unseen.iter().collect();
            assert!(a.is_disjoint(&b) && a.is_disjoint(&u) && b.is_disjoint(&u));
            assert_eq!(a.len() + b.len() + u.len(), 10);
            assert_eq!((b.len(), u.len()), (3, 3));
            for id in &s.train_utterances {
                let utt = c.utterance(id).unwrap();
                assert!(!s.test_unseen.contains(&utt.scenario_id));
            }
            let train: HashSet<_> = s.train_utterances.iter().collect();
            let test: HashSet<_> = s.test_utterances.iter().collect();
            assert!(train.is_disjoint(&test));
            assert_eq!(train.len() + test.len(), c.utterances().len());
        }
    }

    #[test]
    fn different_seeds_can_differ() {
        let c = corpus(10);
        let splits: HashSet<Vec<String>> = (0..10)
            .map(|seed| make_split(&c, seed, 3).unwrap().test_unseen)
            .collect();
        assert!(splits.len() > 1);
    }
}
