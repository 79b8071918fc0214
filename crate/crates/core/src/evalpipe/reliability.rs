use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{RatingRecord, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Question {
    Nonsensical,
    Typicality,
    Offensiveness,
    Forwardness,
    Affect,
}

impl Question {
    pub const ALL: [Question; 5] = [
        Question::Nonsensical,
        Question::Typicality,
        Question::Offensiveness,
        Question::Forwardness,
        Question::Affect,
    ];

    pub fn stage(self) -> Stage {
        match self {
            Question::Affect => Stage::Two,
            _ => Stage::One,
        }
    }

    /// The record's answer to this question, `None` when skipped.
    fn answer(self, r: &RatingRecord) -> Option<Option<i16>> {
        match (self, r) {
            (Question::Nonsensical, RatingRecord::Stage1(s)) => Some(Some(i16::from(s.nonsensical))),
            (Question::Typicality, RatingRecord::Stage1(s)) => Some(s.typicality.map(i16::from)),
            (Question::Offensiveness, RatingRecord::Stage1(s)) => Some(s.offensiveness.map(i16::from)),
            (Question::Forwardness, RatingRecord::Stage1(s)) => Some(s.forwardness.map(i16::from)),
            (Question::Affect, RatingRecord::Stage2(s)) => Some(Some(i16::from(s.combined()))),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReliabilityPolicy {
    pub min_tasks: usize,
    pub questions: Vec<Question>,
}

impl Default for ReliabilityPolicy {
    fn default() -> Self {
        Self {
            min_tasks: 2,
            questions: vec![
                Question::Typicality,
                Question::Offensiveness,
                Question::Forwardness,
                Question::Affect,
            ],
        }
    }
}

/// Raters who completed at least `min_tasks` tasks of a question's stage and
/// gave that question the same answer on every utterance of those tasks.
/// A question the rater always skipped does not count as repetitive.
pub fn flag_unreliable(records: &[RatingRecord], policy: &ReliabilityPolicy) -> BTreeSet<String> {
    assert!(policy.min_tasks >= 2, "min_tasks must be at least 2");
    let mut by_rater: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in records {
        by_rater.entry(r.rater_id()).or_default().push(r);
    }
    let mut flagged = BTreeSet::new();
    for (rater, recs) in by_rater {
        let repetitive = policy.questions.iter().any(|&q| {
            let relevant: Vec<&&RatingRecord> = recs.iter().filter(|r| r.stage() == q.stage()).collect();
            let tasks: BTreeSet<&str> = relevant.iter().map(|r| r.task_id()).collect();
            if tasks.len() < policy.min_tasks {
                return false;
            }
            let answers: BTreeSet<Option<i16>> = relevant.iter().filter_map(|r| q.answer(r)).collect();
            answers.len() == 1 && answers.iter().next().unwrap().is_some()
        });
        if repetitive {
            flagged.insert(rater.to_string());
        }
    }
    flagged
}
