use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AffectTarget, CorpusError, SplitTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub description: String,
    pub affect_target: AffectTarget,
    #[serde(default, skip_serializing)]
    pub split_tag: SplitTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Model,
}

/// Crowd-aggregated mean scores carried by an utterance record.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RatingScores {
    pub typicality: Option<f64>,
    pub offensiveness: Option<f64>,
    pub forwardness: Option<f64>,
    pub affect: Option<f64>,
}

impl RatingScores {
    pub fn is_empty(&self) -> bool {
        self.typicality.is_none() && self.offensiveness.is_none() && self.forwardness.is_none() && self.affect.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub scenario_id: String,
    pub affect_target: AffectTarget,
    pub text: String,
    pub source: Source,
    pub aggregated: Option<RatingScores>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RdgRecord {
    Scenario {
        id: String,
        description: String,
        affect_target: AffectTarget,
    },
    Utterance {
        id: String,
        scenario_id: String,
        affect_target: AffectTarget,
        text: String,
        source: Source,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        typicality: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offensiveness: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        forwardness: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        affect: Option<f64>,
    },
}

/// Scenarios and their authored utterances. Immutable once loaded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RdgCorpus {
    scenarios: Vec<Scenario>,
    utterances: Vec<Utterance>,
}

impl RdgCorpus {
    /// Validates cross references and id uniqueness.
    pub fn new(scenarios: Vec<Scenario>, utterances: Vec<Utterance>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for s in &scenarios {
            if s.description.trim().is_empty() {
                return Err(CorpusError::Invalid {
                    line: 0,
                    reason: format!("scenario {} has an empty description", s.id),
                });
            }
            if !seen.insert(s.id.as_str()) {
                return Err(CorpusError::DuplicateId(s.id.clone()));
            }
        }
        let mut seen_utt = HashSet::new();
        for u in &utterances {
            if !seen.contains(u.scenario_id.as_str()) {
                return Err(CorpusError::DanglingReference(u.scenario_id.clone()));
            }
            if !seen_utt.insert(u.id.as_str()) {
                return Err(CorpusError::DuplicateId(u.id.clone()));
            }
            if u.text.trim().is_empty() {
                return Err(CorpusError::Invalid {
                    line: 0,
                    reason: format!("utterance {} has empty text", u.id),
                });
            }
        }
        Ok(Self { scenarios, utterances })
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn scenario(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn utterance(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty() && self.utterances.is_empty()
    }

    /// Distinct (scenario, affect) pairs that have at least one utterance.
    pub fn contexts(&self) -> BTreeSet<(String, AffectTarget)> {
        self.utterances
            .iter()
            .map(|u| (u.scenario_id.clone(), u.affect_target))
            .collect()
    }

    /// Human-written references for one scenario and affect.
    pub fn references(&self, scenario_id: &str, affect: AffectTarget) -> Vec<&Utterance> {
        self.utterances
            .iter()
            .filter(|u| u.scenario_id == scenario_id && u.affect_target == affect && u.source == Source::Human)
            .collect()
    }

    pub fn utterances_by_scenario(&self) -> BTreeMap<&str, Vec<&Utterance>> {
        let mut map: BTreeMap<&str, Vec<&Utterance>> = BTreeMap::new();
        for u in &self.utterances {
            map.entry(u.scenario_id.as_str()).or_default().push(u);
        }
        map
    }

    /// Copy with scenario split tags set from a split.
    pub fn with_split(&self, split: &super::CorpusSplit) -> Self {
        let mut out = self.clone();
        for s in &mut out.scenarios {
            s.split_tag = if split.test_unseen.contains(&s.id) {
                SplitTag::Unseen
            } else if split.test_seen.contains(&s.id) {
                SplitTag::Test
            } else {
                SplitTag::Train
            };
        }
        out
    }
}

pub fn load_rdg(path: impl AsRef<Path>) -> Result<RdgCorpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_rdg(BufReader::new(file))
}

pub(crate) fn read_rdg<R: BufRead>(reader: R) -> Result<RdgCorpus, CorpusError> {
    let mut scenarios = Vec::new();
    let mut utterances = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RdgRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        match record {
            RdgRecord::Scenario {
                id,
                description,
                affect_target,
            } => scenarios.push(Scenario {
                id,
                description,
                affect_target,
                split_tag: SplitTag::Train,
            }),
            RdgRecord::Utterance {
                id,
                scenario_id,
                affect_target,
                text,
                source,
                typicality,
                offensiveness,
                forwardness,
                affect,
            } => {
                let scores = RatingScores {
                    typicality,
                    offensiveness,
                    forwardness,
                    affect,
                };
                utterances.push(Utterance {
                    id,
                    scenario_id,
                    affect_target,
                    text,
                    source,
                    aggregated: (!scores.is_empty()).then_some(scores),
                });
            }
        }
    }
    RdgCorpus::new(scenarios, utterances)
}

/// Writes scenarios first, then utterances, one JSON record per line.
pub fn write_rdg<W: Write>(corpus: &RdgCorpus, mut w: W) -> Result<(), CorpusError> {
    for s in &corpus.scenarios {
        let rec = RdgRecord::Scenario {
            id: s.id.clone(),
            description: s.description.clone(),
            affect_target: s.affect_target,
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
    }
    for u in &corpus.utterances {
        let scores = u.aggregated.unwrap_or_default();
        let rec = RdgRecord::Utterance {
            id: u.id.clone(),
            scenario_id: u.scenario_id.clone(),
            affect_target: u.affect_target,
            text: u.text.clone(),
            source: u.source,
            typicality: scores.typicality,
            offensiveness: scores.offensiveness,
            forwardness: scores.forwardness,
            affect: scores.affect,
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
    }
    Ok(())
}
