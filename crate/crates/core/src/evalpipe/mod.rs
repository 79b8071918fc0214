//! Offline crowd-rating pipeline: task batching, two-stage rating records,
//! aggregation into per-utterance means, repetitive-rater detection and a
//! simulated rater pool.

mod aggregate;
mod records;
mod reliability;
mod simulate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{
    aggregate, read_aggregation_report, write_aggregation_report, AggregatedRating, Aggregation, Deficit, ReportLine,
};
pub use records::{read_ratings, write_ratings, RatingRecord, RatingStore, Stage1Rating, Stage2Rating};
pub use reliability::{flag_unreliable, Question, ReliabilityPolicy};
pub use simulate::{constant_rater, simulate_raters, NoiseModel, UtteranceTruth};

/// Utterances per task, and valid raters required per utterance and stage.
pub const TASK_SIZE: usize = 5;
pub const RATERS_PER_UTTERANCE: usize = 5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid rating: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn index(self) -> usize {
        match self {
            Stage::One => 0,
            Stage::Two => 1,
        }
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s.index() as u8 + 1
    }
}

impl TryFrom<u8> for Stage {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Stage::One),
            2 => Ok(Stage::Two),
            _ => Err(format!("unknown stage {v}")),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// Affect class chosen by a rater in the second stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatedAffect {
    Excited,
    Frustrated,
    Indifferent,
}

/// Folds class and strength into the single [-4, 4] scale.
pub fn combine_affect(class: RatedAffect, strength: Option<u8>) -> Result<i8, EvalError> {
    match (class, strength) {
        (RatedAffect::Indifferent, None) => Ok(0),
        (RatedAffect::Indifferent, Some(s)) => Err(EvalError::Invalid(format!("strength {s} given with indifferent"))),
        (_, None) => Err(EvalError::Invalid(format!("{class:?} rating lacks a strength"))),
        (_, Some(s)) if !(1..=4).contains(&s) => Err(EvalError::Invalid(format!("strength {s} outside 1..=4"))),
        (RatedAffect::Excited, Some(s)) => Ok(s as i8),
        (RatedAffect::Frustrated, Some(s)) => Ok(-(s as i8)),
    }
}

/// Inverse of [`combine_affect`] for values in [-4, 4].
pub fn split_affect(value: i8) -> (RatedAffect, Option<u8>) {
    match value {
        0 => (RatedAffect::Indifferent, None),
        v if v > 0 => (RatedAffect::Excited, Some(v as u8)),
        v => (RatedAffect::Frustrated, Some(v.unsigned_abs())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingTask {
    pub task_id: String,
    pub stage: Stage,
    pub utterance_ids: Vec<String>,
}

/// Consecutive groups of five in input order. A short final group is filled
/// by cycling from the start of the list (with fewer than five utterances in
/// total, ids repeat within the one task).
pub fn build_tasks(utterance_ids: &[String], stage: Stage) -> Vec<RatingTask> {
    utterance_ids
        .chunks(TASK_SIZE)
        .enumerate()
        .map(|(i, chunk)| {
            let mut ids = chunk.to_vec();
            let mut cycle = utterance_ids.iter().cycle();
            while ids.len() < TASK_SIZE {
                ids.push(cycle.next().unwrap().clone());
            }
            RatingTask {
                task_id: format!("s{}-t{i:04}", u8::from(stage)),
                stage,
                utterance_ids: ids,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("u{i:03}")).collect()
    }

    fn s1(rater: &str, uid: &str, typ: Option<u8>, off: Option<u8>) -> RatingRecord {
        RatingRecord::Stage1(Stage1Rating {
            task_id: "t".into(),
            rater_id: rater.into(),
            utterance_id: uid.into(),
            nonsensical: typ.is_none(),
            typicality: typ,
            offensiveness: off,
            forwardness: None,
        })
    }

    fn s2(rater: &str, uid: &str, v: i8) -> RatingRecord {
        let (affect_class, strength) = split_affect(v);
        RatingRecord::Stage2(Stage2Rating {
            task_id: "t2".into(),
            rater_id: rater.into(),
            utterance_id: uid.into(),
            affect_class,
            strength,
        })
    }

    #[test]
    fn combine_affect_scale() {
        assert_eq!(combine_affect(RatedAffect::Excited, Some(4)).unwrap(), 4);
        assert_eq!(combine_affect(RatedAffect::Frustrated, Some(2)).unwrap(), -2);
        assert_eq!(combine_affect(RatedAffect::Indifferent, None).unwrap(), 0);
        assert!(combine_affect(RatedAffect::Indifferent, Some(1)).is_err());
        assert!(combine_affect(RatedAffect::Excited, None).is_err());
        assert!(combine_affect(RatedAffect::Excited, Some(5)).is_err());
    }

    #[test]
    fn task_batching() {
        let t = build_tasks(&ids(12), Stage::One);
        assert_eq!(t.len(), 3);
        assert_eq!(t[2].utterance_ids, vec!["u010", "u011", "u000", "u001", "u002"]);
        assert_eq!(build_tasks(&ids(5), Stage::Two).len(), 1);
        assert!(build_tasks(&[], Stage::One).is_empty());
    }

    #[test]
    fn typicality_mean_plain() {
        let mut recs: Vec<_> = [3, 4, 5, 4, 4]
            .iter()
            .enumerate()
            .map(|(i, &t)| s1(&format!("r{i}"), "u", Some(t), Some(1)))
            .collect();
        recs.extend((0..5).map(|i| s2(&format!("r{i}"), "u", 0)));
        let a = aggregate(&recs, &BTreeSet::new());
        assert_eq!(a.ratings["u"].typicality, 4.0);
    }

    #[test]
    fn nonsensical_votes_count_as_zero() {
        let mut recs = vec![s1("a", "u", None, None), s1("b", "u", None, None)];
        recs.push(s1("c", "u", Some(4), Some(1)));
        recs.push(s1("d", "u", Some(4), Some(2)));
        recs.push(s1("e", "u", Some(3), Some(3)));
        recs.extend(["a", "b", "c", "d", "e"].iter().map(|r| s2(r, "u", -1)));
        let a = &aggregate(&recs, &BTreeSet::new()).ratings["u"];
        assert!((a.typicality - 2.2).abs() < 1e-12);
        assert_eq!(a.offensiveness, Some(2.0));
        assert_eq!(a.n_offensiveness, 3);
        assert_eq!(a.affect, -1.0);
    }

    #[test]
    fn exclusion_creates_deficit() {
        let mut recs: Vec<_> = (0..5).map(|i| s1(&format!("r{i}"), "u", Some(3), Some(1))).collect();
        recs.extend((0..5).map(|i| s2(&format!("r{i}"), "u", 2)));
        let excl: BTreeSet<String> = ["r2".to_string()].into();
        let a = aggregate(&recs, &excl);
        assert!(a.ratings.is_empty());
        assert_eq!(a.deficits.len(), 2);
        assert!(a.deficits.iter().all(|d| d.needed == 1));
        let mut buf = Vec::new();
        write_aggregation_report(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"deficit\":2"), "{text}");
        let lines = read_aggregation_report(text.as_bytes()).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!((lines[0].typicality, lines[0].n_valid, lines[0].deficit), (None, 4, 2));
    }

    #[test]
    fn first_five_in_arrival_order() {
        let mut recs: Vec<_> = (0..7)
            .map(|i| s1(&format!("r{i}"), "u", Some(if i < 5 { 2 } else { 5 }), Some(1)))
            .collect();
        // a repeat by the same rater does not count twice
        recs.insert(1, s1("r0", "u", Some(5), Some(5)));
        recs.extend((0..5).map(|i| s2(&format!("r{i}"), "u", 1)));
        let a = aggregate(&recs, &BTreeSet::new());
        assert_eq!(a.ratings["u"].typicality, 2.0);
    }

    #[test]
    fn flags_repetitive_rater_only() {
        let utt = ids(15);
        let tasks = build_tasks(&utt, Stage::One);
        let mut recs = constant_rater("lazy", &tasks);
        for (k, task) in tasks.iter().enumerate() {
            for (j, uid) in task.utterance_ids.iter().enumerate() {
                let mut r = s1("diligent", uid, Some(1 + ((j + k) % 5) as u8), Some(1 + (j % 3) as u8));
                if let RatingRecord::Stage1(s) = &mut r {
                    s.task_id = task.task_id.clone();
                }
                recs.push(r);
            }
        }
        recs.extend(constant_rater("newcomer", &tasks[..1]));
        let flagged = flag_unreliable(&recs, &ReliabilityPolicy::default());
        assert_eq!(flagged, BTreeSet::from(["lazy".to_string()]));
    }

    #[test]
    fn zero_noise_simulation_recovers_truths() {
        let truths: Vec<UtteranceTruth> = (0..23)
            .map(|i| UtteranceTruth {
                utterance_id: format!("u{i:02}"),
                typicality: (i % 6) as f64,
                offensiveness: 1.0 + (i % 5) as f64,
                forwardness: 1.0 + (i % 4) as f64,
                affect: (i % 9) as f64 - 4.0,
            })
            .collect();
        let recs = simulate_raters(&truths, NoiseModel::default(), 5, 1);
        let a = aggregate(&recs, &BTreeSet::new());
        assert!(a.deficits.is_empty());
        for t in &truths {
            let r = &a.ratings[&t.utterance_id];
            assert_eq!(r.typicality, t.typicality);
            assert_eq!(r.affect, t.affect);
            if t.typicality > 0.0 {
                assert_eq!(r.offensiveness, Some(t.offensiveness));
                assert_eq!(r.forwardness, Some(t.forwardness));
            } else {
                assert_eq!(r.offensiveness, None);
            }
        }
    }

    #[test]
    fn noisy_simulation_is_close() {
        let truths: Vec<UtteranceTruth> = (0..200)
            .map(|i| UtteranceTruth {
                utterance_id: format!("u{i:03}"),
                typicality: 1.0 + (i % 5) as f64,
                offensiveness: 1.0 + (i % 5) as f64,
                forwardness: 3.0,
                affect: (i % 9) as f64 - 4.0,
            })
            .collect();
        let recs = simulate_raters(&truths, NoiseModel { max_offset: 1 }, 5, 7);
        let a = aggregate(&recs, &BTreeSet::new());
        let mae = truths
            .iter()
            .map(|t| (a.ratings[&t.utterance_id].typicality - t.typicality).abs())
            .sum::<f64>()
            / 200.0;
        assert!(mae < 0.5, "mae {mae}");
        assert_eq!(simulate_raters(&truths, NoiseModel { max_offset: 1 }, 5, 7), recs);
    }

    proptest! {
        #[test]
        fn affect_sign_symmetry(s in 1u8..=4) {
            prop_assert_eq!(
                combine_affect(RatedAffect::Excited, Some(s)).unwrap(),
                -combine_affect(RatedAffect::Frustrated, Some(s)).unwrap()
            );
        }

        #[test]
        fn every_utterance_in_a_task(n in 0usize..40) {
            let u = ids(n);
            let tasks = build_tasks(&u, Stage::One);
            let seen: BTreeSet<&String> = tasks.iter().flat_map(|t| &t.utterance_ids).collect();
            prop_assert_eq!(seen.len(), n);
            prop_assert!(tasks.iter().all(|t| t.utterance_ids.len() == TASK_SIZE));
        }

        #[test]
        fn aggregation_partitions_and_stays_in_range(
            seed in any::<u64>(),
            n_raters in 3usize..8,
            noise in 0i32..3,
            excluded in prop::collection::btree_set(0usize..8, 0..3),
        ) {
            let truths: Vec<UtteranceTruth> = (0..12)
                .map(|i| UtteranceTruth {
                    utterance_id: format!("u{i:02}"),
                    typicality: (i % 6) as f64,
                    offensiveness: 2.0,
                    forwardness: 4.0,
                    affect: (i % 9) as f64 - 4.0,
                })
                .collect();
            let recs = simulate_raters(&truths, NoiseModel { max_offset: noise }, n_raters, seed);
            let excl: BTreeSet<String> = excluded.iter().map(|j| format!("sim-{j:02}")).collect();
            let a = aggregate(&recs, &excl);
            let deficit = a.deficit_ids();
            for t in &truths {
                let id = t.utterance_id.as_str();
                prop_assert!(a.ratings.contains_key(id) != deficit.contains(id));
            }
            for r in a.ratings.values() {
                prop_assert!((0.0..=5.0).contains(&r.typicality));
                prop_assert!((-4.0..=4.0).contains(&r.affect));
                if let Some(o) = r.offensiveness { prop_assert!((1.0..=5.0).contains(&o)); }
                if let Some(f) = r.forwardness { prop_assert!((1.0..=5.0).contains(&f)); }
            }
            // excluding a rater who rated nothing changes nothing
            let mut more = excl.clone();
            more.insert("nobody".into());
            prop_assert_eq!(aggregate(&recs, &more), a);
        }
    }
}
