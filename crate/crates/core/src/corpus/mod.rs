//! Corpus data model, ingestion of RDG-style and ED-style record files,
//! scenario-level splits and conversion into training examples.

mod ed;
mod example;
mod rdg;
mod split;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ed::{
    load_ed, load_label_manifest, write_ed, write_label_manifest, EdConversation, EdCorpus, EmotionLabels, Speaker,
    Turn,
};
pub use example::{ed_examples, ed_turn_example, rdg_context, rdg_example, AffectLabel, TrainingExample};
pub use rdg::{load_rdg, write_rdg, RatingScores, RdgCorpus, Scenario, Source, Utterance};
pub use split::{make_split, CorpusSplit};

/// Number of emotion labels an ED label manifest must declare.
pub const ED_LABEL_COUNT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffectTarget {
    Excited,
    Indifferent,
    Impatient,
}

impl AffectTarget {
    pub const ALL: [AffectTarget; 3] = [
        AffectTarget::Excited,
        AffectTarget::Indifferent,
        AffectTarget::Impatient,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AffectTarget::Excited => "excited",
            AffectTarget::Indifferent => "indifferent",
            AffectTarget::Impatient => "impatient",
        }
    }
}

impl fmt::Display for AffectTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AffectTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "excited" => Ok(AffectTarget::Excited),
            "indifferent" => Ok(AffectTarget::Indifferent),
            "impatient" => Ok(AffectTarget::Impatient),
            other => Err(format!("unknown affect target {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    #[default]
    Train,
    Test,
    Unseen,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("dangling reference {0}")]
    DanglingReference(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("emotion label {label:?} not in manifest (conversation {conversation})")]
    UnknownLabel { conversation: String, label: String },
    #[error("label manifest has {found} entries, expected {expected}")]
    ManifestCount { found: usize, expected: usize },
    #[error("cannot hold out {n_unseen} of {total} scenarios")]
    TooManyUnseen { n_unseen: usize, total: usize },
    #[error("response of {len} tokens cannot fit max_seq_len {max_seq_len}")]
    ResponseTooLong { len: usize, max_seq_len: usize },
    #[error("turn index {index} out of range for conversation with {turns} turns")]
    TurnOutOfRange { index: usize, turns: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
