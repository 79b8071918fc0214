use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EvalError, RatingRecord, Stage, RATERS_PER_UTTERANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedRating {
    pub utterance_id: String,
    /// Mean over five raters, nonsensical votes counted as 0.
    pub typicality: f64,
    /// Mean over the raters who did not mark the utterance nonsensical.
    pub offensiveness: Option<f64>,
    pub forwardness: Option<f64>,
    pub affect: f64,
    pub n_typicality: usize,
    pub n_offensiveness: usize,
    pub n_forwardness: usize,
    pub n_affect: usize,
}

/// Replacement demand: `needed` more valid raters in `stage`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Deficit {
    pub utterance_id: String,
    pub stage: Stage,
    pub valid: usize,
    pub needed: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregation {
    pub ratings: BTreeMap<String, AggregatedRating>,
    pub deficits: Vec<Deficit>,
}

impl Aggregation {
    /// Ids on the deficit list (an utterance may lack raters in both stages).
    pub fn deficit_ids(&self) -> BTreeSet<&str> {
        self.deficits.iter().map(|d| d.utterance_id.as_str()).collect()
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Aggregates per-utterance means from the first five distinct
/// non-excluded raters of each stage, in arrival order. Utterances short of
/// five valid raters in either stage go to the deficit list instead.
pub fn aggregate(records: &[RatingRecord], exclusions: &BTreeSet<String>) -> Aggregation {
    // utterance -> stage -> chosen records
    let mut chosen: BTreeMap<&str, [Vec<&RatingRecord>; 2]> = BTreeMap::new();
    let mut used: HashSet<(&str, Stage, &str)> = HashSet::new();
    for r in records {
        let slots = chosen.entry(r.utterance_id()).or_default();
        if exclusions.contains(r.rater_id()) {
            continue;
        }
        let stage = r.stage();
        let slot = &mut slots[stage.index()];
        if slot.len() < RATERS_PER_UTTERANCE && used.insert((r.utterance_id(), stage, r.rater_id())) {
            slot.push(r);
        }
    }

    let mut out = Aggregation::default();
    for (uid, [first, second]) in chosen {
        let mut short = false;
        for (stage, slot) in [(Stage::One, &first), (Stage::Two, &second)] {
            if slot.len() < RATERS_PER_UTTERANCE {
                short = true;
                out.deficits.push(Deficit {
                    utterance_id: uid.to_string(),
                    stage,
                    valid: slot.len(),
                    needed: RATERS_PER_UTTERANCE - slot.len(),
                });
            }
        }
        if short {
            continue;
        }
        let mut typ = Vec::new();
        let mut off = Vec::new();
        let mut fwd = Vec::new();
        for r in &first {
            if let RatingRecord::Stage1(s) = r {
                if s.nonsensical {
                    typ.push(0.0);
                } else {
                    typ.push(f64::from(s.typicality.unwrap()));
                    off.push(f64::from(s.offensiveness.unwrap()));
                    if let Some(f) = s.forwardness {
                        fwd.push(f64::from(f));
                    }
                }
            }
        }
        let aff: Vec<f64> = second
            .iter()
            .filter_map(|r| match r {
                RatingRecord::Stage2(s) => Some(f64::from(s.combined())),
                _ => None,
            })
            .collect();
        out.ratings.insert(
            uid.to_string(),
            AggregatedRating {
                utterance_id: uid.to_string(),
                typicality: mean(&typ).unwrap(),
                offensiveness: mean(&off),
                forwardness: mean(&fwd),
                affect: mean(&aff).unwrap(),
                n_typicality: typ.len(),
                n_offensiveness: off.len(),
                n_forwardness: fwd.len(),
                n_affect: aff.len(),
            },
        );
    }
    out
}

/// One line of the aggregation report. Score fields are absent for
/// utterances on the deficit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub utterance_id: String,
    pub typicality: Option<f64>,
    pub offensiveness: Option<f64>,
    pub forwardness: Option<f64>,
    pub affect: Option<f64>,
    pub n_valid: usize,
    pub deficit: usize,
}

/// Line-delimited aggregation report sorted by utterance id. `n_valid` is the
/// smaller valid-rater count of the two stages; `deficit` the total number of
/// replacement ratings demanded.
pub fn write_aggregation_report<W: Write>(agg: &Aggregation, mut w: W) -> Result<(), EvalError> {
    let mut ids: BTreeSet<&str> = agg.ratings.keys().map(String::as_str).collect();
    ids.extend(agg.deficit_ids());
    for id in ids {
        let line = match agg.ratings.get(id) {
            Some(a) => ReportLine {
                utterance_id: id.to_string(),
                typicality: Some(a.typicality),
                offensiveness: a.offensiveness,
                forwardness: a.forwardness,
                affect: Some(a.affect),
                n_valid: a.n_typicality.min(a.n_affect),
                deficit: 0,
            },
            None => {
                let ds: Vec<&Deficit> = agg.deficits.iter().filter(|d| d.utterance_id == id).collect();
                let valid_in = |s: Stage| {
                    ds.iter()
                        .find(|d| d.stage == s)
                        .map_or(RATERS_PER_UTTERANCE, |d| d.valid)
                };
                ReportLine {
                    utterance_id: id.to_string(),
                    typicality: None,
                    offensiveness: None,
                    forwardness: None,
                    affect: None,
                    n_valid: valid_in(Stage::One).min(valid_in(Stage::Two)),
                    deficit: ds.iter().map(|d| d.needed).sum(),
                }
            }
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| EvalError::Invalid(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_aggregation_report<R: BufRead>(r: R) -> Result<Vec<ReportLine>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
