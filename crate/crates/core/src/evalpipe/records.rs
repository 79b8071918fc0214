use std::io::{BufRead, Write};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{combine_affect, EvalError, RatedAffect, Stage};

/// First-stage answers. Typicality and offensiveness are skipped when the
/// rater marks the utterance nonsensical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage1Rating {
    pub task_id: String,
    pub rater_id: String,
    pub utterance_id: String,
    pub nonsensical: bool,
    pub typicality: Option<u8>,
    pub offensiveness: Option<u8>,
    pub forwardness: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Rating {
    pub task_id: String,
    pub rater_id: String,
    pub utterance_id: String,
    pub affect_class: RatedAffect,
    pub strength: Option<u8>,
}

fn likert(name: &str, v: Option<u8>) -> Result<(), EvalError> {
    match v {
        Some(x) if !(1..=5).contains(&x) => Err(EvalError::Invalid(format!("{name} {x} outside 1..=5"))),
        _ => Ok(()),
    }
}

impl Stage1Rating {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.nonsensical {
            if self.typicality.is_some() || self.offensiveness.is_some() || self.forwardness.is_some() {
                return Err(EvalError::Invalid(format!(
                    "rater {} marked {} nonsensical but answered skipped questions",
                    self.rater_id, self.utterance_id
                )));
            }
        } else if self.typicality.is_none() || self.offensiveness.is_none() {
            return Err(EvalError::Invalid(format!(
                "rater {} left typicality or offensiveness empty for {}",
                self.rater_id, self.utterance_id
            )));
        }
        likert("typicality", self.typicality)?;
        likert("offensiveness", self.offensiveness)?;
        likert("forwardness", self.forwardness)
    }
}

impl Stage2Rating {
    pub fn validate(&self) -> Result<(), EvalError> {
        combine_affect(self.affect_class, self.strength).map(|_| ())
    }

    pub fn combined(&self) -> i8 {
        combine_affect(self.affect_class, self.strength).expect("validated rating")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RatingRecord {
    Stage1(Stage1Rating),
    Stage2(Stage2Rating),
}

impl RatingRecord {
    pub fn stage(&self) -> Stage {
        match self {
            RatingRecord::Stage1(_) => Stage::One,
            RatingRecord::Stage2(_) => Stage::Two,
        }
    }

    pub fn rater_id(&self) -> &str {
        match self {
            RatingRecord::Stage1(r) => &r.rater_id,
            RatingRecord::Stage2(r) => &r.rater_id,
        }
    }

    pub fn utterance_id(&self) -> &str {
        match self {
            RatingRecord::Stage1(r) => &r.utterance_id,
            RatingRecord::Stage2(r) => &r.utterance_id,
        }
    }

    pub fn task_id(&self) -> &str {
        match self {
            RatingRecord::Stage1(r) => &r.task_id,
            RatingRecord::Stage2(r) => &r.task_id,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        match self {
            RatingRecord::Stage1(r) => r.validate(),
            RatingRecord::Stage2(r) => r.validate(),
        }
    }
}

/// Flat line format shared by both stages.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    stage: u8,
    task_id: String,
    rater_id: String,
    utterance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nonsensical: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    typicality: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offensiveness: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    forwardness: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    affect_class: Option<RatedAffect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strength: Option<u8>,
}

impl From<&RatingRecord> for Line {
    fn from(r: &RatingRecord) -> Self {
        match r {
            RatingRecord::Stage1(s) => Line {
                stage: 1,
                task_id: s.task_id.clone(),
                rater_id: s.rater_id.clone(),
                utterance_id: s.utterance_id.clone(),
                nonsensical: Some(s.nonsensical),
                typicality: s.typicality,
                offensiveness: s.offensiveness,
                forwardness: s.forwardness,
                affect_class: None,
                strength: None,
            },
            RatingRecord::Stage2(s) => Line {
                stage: 2,
                task_id: s.task_id.clone(),
                rater_id: s.rater_id.clone(),
                utterance_id: s.utterance_id.clone(),
                nonsensical: None,
                typicality: None,
                offensiveness: None,
                forwardness: None,
                affect_class: Some(s.affect_class),
                strength: s.strength,
            },
        }
    }
}

impl TryFrom<Line> for RatingRecord {
    type Error = String;

    fn try_from(l: Line) -> Result<Self, String> {
        match l.stage {
            1 => {
                if l.affect_class.is_some() || l.strength.is_some() {
                    return Err("stage 1 record carries stage 2 answers".into());
                }
                Ok(RatingRecord::Stage1(Stage1Rating {
                    task_id: l.task_id,
                    rater_id: l.rater_id,
                    utterance_id: l.utterance_id,
                    nonsensical: l.nonsensical.unwrap_or(false),
                    typicality: l.typicality,
                    offensiveness: l.offensiveness,
                    forwardness: l.forwardness,
                }))
            }
            2 => {
                if l.nonsensical.is_some()
                    || l.typicality.is_some()
                    || l.offensiveness.is_some()
                    || l.forwardness.is_some()
                {
                    return Err("stage 2 record carries stage 1 answers".into());
                }
                Ok(RatingRecord::Stage2(Stage2Rating {
                    task_id: l.task_id,
                    rater_id: l.rater_id,
                    utterance_id: l.utterance_id,
                    affect_class: l.affect_class.ok_or("stage 2 record lacks affect_class")?,
                    strength: l.strength,
                }))
            }
            s => Err(format!("unknown stage {s}")),
        }
    }
}

pub fn write_ratings<W: Write>(records: &[RatingRecord], mut w: W) -> Result<(), EvalError> {
    for r in records {
        serde_json::to_writer(&mut w, &Line::from(r)).map_err(|e| EvalError::Invalid(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads line-delimited rating records, validating each.
pub fn read_ratings<R: BufRead>(r: R) -> Result<Vec<RatingRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |m: String| EvalError::Malformed {
            line: i + 1,
            message: m,
        };
        let raw: Line = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let rec = RatingRecord::try_from(raw).map_err(malformed)?;
        rec.validate().map_err(|e| malformed(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Append-only rating log. Appends may come from several threads;
/// aggregation works on a snapshot in arrival order.
#[derive(Debug, Default)]
pub struct RatingStore {
    records: Mutex<Vec<RatingRecord>>,
}

impl RatingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, record: RatingRecord) -> Result<(), EvalError> {
        record.validate()?;
        self.records.lock().expect("rating store poisoned").push(record);
        Ok(())
    }

    pub fn extend(&self, records: impl IntoIterator<Item = RatingRecord>) -> Result<(), EvalError> {
        let records: Vec<_> = records.into_iter().collect();
        for r in &records {
            r.validate()?;
        }
        self.records.lock().expect("rating store poisoned").extend(records);
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<RatingRecord> {
        self.records.lock().expect("rating store poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("rating store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s1(nonsense: bool, t: Option<u8>, o: Option<u8>) -> Stage1Rating {
        Stage1Rating {
            task_id: "t".into(),
            rater_id: "r".into(),
            utterance_id: "u".into(),
            nonsensical: nonsense,
            typicality: t,
            offensiveness: o,
            forwardness: None,
        }
    }

    #[test]
    fn absence_pattern_checked() {
        assert!(s1(false, Some(3), Some(1)).validate().is_ok());
        assert!(s1(true, None, None).validate().is_ok());
        assert!(s1(true, Some(3), None).validate().is_err());
        assert!(s1(false, None, Some(2)).validate().is_err());
        assert!(s1(false, Some(6), Some(2)).validate().is_err());
    }

    #[test]
    fn line_round_trip() {
        let recs = vec![
            RatingRecord::Stage1(s1(false, Some(4), Some(2))),
            RatingRecord::Stage1(s1(true, None, None)),
            RatingRecord::Stage2(Stage2Rating {
                task_id: "t2".into(),
                rater_id: "r".into(),
                utterance_id: "u".into(),
                affect_class: RatedAffect::Frustrated,
                strength: Some(2),
            }),
        ];
        let mut buf = Vec::new();
        write_ratings(&recs, &mut buf).unwrap();
        assert_eq!(read_ratings(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn malformed_lines_report_position() {
        let text = "{\"stage\":1,\"task_id\":\"t\",\"rater_id\":\"r\",\"utterance_id\":\"u\",\"typicality\":3,\"offensiveness\":1}\n{\"stage\":3,\"task_id\":\"t\",\"rater_id\":\"r\",\"utterance_id\":\"u\"}\n";
        match read_ratings(text.as_bytes()) {
            Err(EvalError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn concurrent_appends() {
        let store = RatingStore::new();
        std::thread::scope(|s| {
            for k in 0..4 {
                let store = &store;
                s.spawn(move || {
                    for i in 0..25 {
                        let mut r = s1(false, Some(3), Some(1));
                        r.rater_id = format!("r{k}");
                        r.utterance_id = format!("u{i}");
                        store.append(RatingRecord::Stage1(r)).unwrap();
                    }
                });
            }
        });
        assert_eq!(store.len(), 100);
    }
}
