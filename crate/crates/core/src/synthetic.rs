//! Template-generated stand-ins for the RDG-style and ED-style corpora, and
//! the affect-marker lexicon used to score text written from those templates.
//!
//! Everything here is deterministic for a fixed seed.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    AffectTarget, CorpusError, EdConversation, EdCorpus, EmotionLabels, RatingScores, RdgCorpus, Scenario, Source,
    Speaker, SplitTag, Turn, Utterance,
};
use crate::evalpipe::UtteranceTruth;
use crate::tokenizer::pre_tokenize;

const PLACES: [&str; 16] = [
    "bridge", "market", "harbor", "tower", "forest", "library", "garden", "station", "castle", "village", "mill",
    "lake", "cave", "farm", "temple", "square",
];
const OBJECTS: [&str; 16] = [
    "map", "key", "lantern", "compass", "coin", "scroll", "ring", "bell", "rope", "shield", "hammer", "torch", "book",
    "feather", "crown", "bottle",
];
const LANDMARKS: [&str; 8] = [
    "old tree",
    "red door",
    "stone wall",
    "big rock",
    "river",
    "north gate",
    "well",
    "fountain",
];
const ACTIONS: [&str; 4] = [
    "asks where",
    "wants to know where",
    "is looking for where",
    "wonders where",
];

const EXCITED_OPEN: [&str; 3] = ["great", "wow", "yes"];
const EXCITED_CLOSE: [&str; 3] = ["have fun", "good luck", "so exciting"];
const IMPATIENT_OPEN: [&str; 3] = ["ugh", "seriously", "come on"];
const IMPATIENT_CLOSE: [&str; 3] = ["hurry up", "stop stalling", "move it now"];
const INDIFFERENT_OPEN: [&str; 3] = ["okay", "well", "fine"];

/// Marker word weights on the combined [-4, 4] affect scale. Unlisted words
/// score zero.
pub const AFFECT_LEXICON: [(&str, f64); 12] = [
    ("great", 1.5),
    ("wow", 1.5),
    ("yes", 1.5),
    ("fun", 1.5),
    ("luck", 1.5),
    ("exciting", 1.5),
    ("ugh", -1.5),
    ("seriously", -1.5),
    ("come", -1.5),
    ("hurry", -1.5),
    ("stalling", -1.5),
    ("now", -1.5),
];

/// The emotion label set of the ED-style corpus, in manifest order.
pub const EMOTION_LABELS: [&str; 32] = [
    "afraid",
    "angry",
    "annoyed",
    "anticipating",
    "anxious",
    "apprehensive",
    "ashamed",
    "caring",
    "confident",
    "content",
    "devastated",
    "disappointed",
    "disgusted",
    "embarrassed",
    "excited",
    "faithful",
    "furious",
    "grateful",
    "guilty",
    "hopeful",
    "impressed",
    "jealous",
    "joyful",
    "lonely",
    "nostalgic",
    "prepared",
    "proud",
    "sad",
    "sentimental",
    "surprised",
    "terrified",
    "trusting",
];

const RELATIONS: [&str; 6] = ["friend", "sister", "neighbor", "boss", "brother", "cousin"];
const EVENTS: [&str; 6] = [
    "called me",
    "visited us",
    "sent a letter",
    "fixed the car",
    "lost the keys",
    "won a game",
];
const REPLIES: [&str; 4] = ["oh really", "tell me more", "i see", "that is a lot"];
const FOLLOWUPS: [&str; 4] = [
    "it happened last week",
    "it was a surprise",
    "i did not expect it",
    "it still matters",
];

/// Sum of lexicon weights over the text's tokens, clamped to [-4, 4].
pub fn lexicon_affect(text: &str) -> f64 {
    pre_tokenize(text)
        .iter()
        .map(|t| AFFECT_LEXICON.iter().find(|(w, _)| w == t).map_or(0.0, |&(_, s)| s))
        .sum::<f64>()
        .clamp(-4.0, 4.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_scenarios: usize,
    /// Human utterances per scenario for excited, indifferent and impatient
    /// targets, in that order.
    pub utterances_per_affect: [usize; 3],
    /// Standard deviation of the rating noise added to lexicon affect before
    /// rounding to a multiple of 0.2 (a mean of five integer ratings).
    pub affect_noise: f64,
    pub n_conversations: usize,
    /// ED conversations use only the first `n_labels` emotion labels.
    pub n_labels: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_scenarios: 12,
            utterances_per_affect: [4, 4, 4],
            affect_noise: 0.5,
            n_conversations: 96,
            n_labels: 32,
            seed: 0,
        }
    }
}

fn round_fifth(x: f64) -> f64 {
    (x * 5.0).round() / 5.0
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; one draw per call keeps the stream easy to reason about
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Scenario description: `the player is at the <place> and <action> the <object> is`.
fn scenario_text(i: usize, rng: &mut ChaCha8Rng) -> (String, &'static str) {
    let place = PLACES[i % PLACES.len()];
    // 7 is coprime to 16, so the first 16 scenarios name distinct objects
    let object = OBJECTS[(i * 7 + i / PLACES.len()) % OBJECTS.len()];
    let action = ACTIONS.choose(rng).unwrap();
    (
        format!("the player is at the {place} and {action} the {object} is"),
        object,
    )
}

/// One templated line for `affect` about `object`.
pub fn utterance_text<R: Rng + ?Sized>(affect: AffectTarget, object: &str, rng: &mut R) -> String {
    let landmark = LANDMARKS.choose(rng).unwrap();
    let body = format!("the {object} is by the {landmark}");
    match affect {
        AffectTarget::Excited => format!(
            "{} {body} {}",
            EXCITED_OPEN.choose(rng).unwrap(),
            EXCITED_CLOSE.choose(rng).unwrap()
        ),
        AffectTarget::Impatient => format!(
            "{} {body} {}",
            IMPATIENT_OPEN.choose(rng).unwrap(),
            IMPATIENT_CLOSE.choose(rng).unwrap()
        ),
        AffectTarget::Indifferent => format!("{} {body}", INDIFFERENT_OPEN.choose(rng).unwrap()),
    }
}

/// RDG-style corpus: `n_scenarios` scenarios, each with human utterances for
/// the three affect targets. Aggregated scores are attached to every
/// utterance; affect is the lexicon score plus rating noise.
pub fn synthetic_rdg(config: &SyntheticConfig) -> Result<RdgCorpus, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scenarios = Vec::new();
    let mut utterances = Vec::new();
    for i in 0..config.n_scenarios {
        let (description, object) = scenario_text(i, &mut rng);
        let id = format!("s{i:03}");
        scenarios.push(Scenario {
            id: id.clone(),
            description,
            affect_target: AffectTarget::ALL[i % 3],
            split_tag: SplitTag::Train,
        });
        for (a, &affect) in AffectTarget::ALL.iter().enumerate() {
            for j in 0..config.utterances_per_affect[a] {
                let text = utterance_text(affect, object, &mut rng);
                let noise = config.affect_noise * gaussian(&mut rng);
                let affect_score = round_fifth((lexicon_affect(&text) + noise).clamp(-4.0, 4.0));
                let offensive = if affect == AffectTarget::Impatient { 2.4 } else { 1.2 };
                utterances.push(Utterance {
                    id: format!("{id}-{}-{j:02}", affect.as_str()),
                    scenario_id: id.clone(),
                    affect_target: affect,
                    text,
                    source: Source::Human,
                    aggregated: Some(RatingScores {
                        typicality: Some(round_fifth(rng.random_range(3.0..4.6))),
                        offensiveness: Some(offensive),
                        forwardness: Some(round_fifth(rng.random_range(3.0..4.6))),
                        affect: Some(affect_score),
                    }),
                });
            }
        }
    }
    RdgCorpus::new(scenarios, utterances)
}

pub fn emotion_labels() -> EmotionLabels {
    EmotionLabels::new(EMOTION_LABELS.iter().map(|s| s.to_string()).collect()).expect("32 distinct labels")
}

/// ED-style corpus. The situation names the emotion, so the label is
/// recoverable from the context.
pub fn synthetic_ed(config: &SyntheticConfig) -> Result<EdCorpus, CorpusError> {
    if config.n_labels == 0 || config.n_labels > EMOTION_LABELS.len() {
        return Err(CorpusError::Invalid {
            line: 0,
            reason: format!("n_labels {} outside 1..=32", config.n_labels),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x00ed_00ed);
    let mut conversations = Vec::new();
    for i in 0..config.n_conversations {
        let label = EMOTION_LABELS[i % config.n_labels];
        let relation = RELATIONS.choose(&mut rng).unwrap();
        let event = EVENTS.choose(&mut rng).unwrap();
        let n_turns = rng.random_range(2..=4);
        let mut turns = Vec::with_capacity(n_turns);
        for t in 0..n_turns {
            let (speaker, text) = if t % 2 == 0 {
                let line = if t == 0 {
                    format!("my {relation} {event}")
                } else {
                    FOLLOWUPS.choose(&mut rng).unwrap().to_string()
                };
                (Speaker::A, line)
            } else {
                (
                    Speaker::B,
                    format!("{} you must feel {label}", REPLIES.choose(&mut rng).unwrap()),
                )
            };
            turns.push(Turn { speaker, text });
        }
        conversations.push(EdConversation {
            id: format!("c{i:04}"),
            situation: format!("i felt {label} when my {relation} {event}"),
            emotion_label: label.to_string(),
            turns,
        });
    }
    Ok(EdCorpus {
        labels: emotion_labels(),
        conversations,
    })
}

/// Latent scores a rater would assign to a generated line: typicality tracks
/// BLEU against the human references (0 when the line is empty), affect comes
/// from the lexicon, offensiveness from negative markers and forwardness from
/// whether the line names a landmark.
pub fn heuristic_truth(utterance_id: &str, text: &str, bleu: f64) -> UtteranceTruth {
    let tokens = pre_tokenize(text);
    let affect = lexicon_affect(text);
    let negative = tokens
        .iter()
        .filter(|t| AFFECT_LEXICON.iter().any(|(w, s)| w == *t && *s < 0.0))
        .count();
    let names_place = LANDMARKS
        .iter()
        .flat_map(|l| l.split(' '))
        .any(|w| tokens.iter().any(|t| t == w));
    let typicality = if tokens.is_empty() {
        0.0
    } else {
        1.0 + 4.0 * bleu.clamp(0.0, 1.0)
    };
    UtteranceTruth {
        utterance_id: utterance_id.to_string(),
        typicality,
        offensiveness: (1.0 + negative as f64).min(5.0),
        forwardness: if names_place { 4.0 } else { 2.0 },
        affect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_ed, load_rdg, write_ed, write_label_manifest, write_rdg};

    #[test]
    fn deterministic_and_well_formed() {
        let cfg = SyntheticConfig::default();
        let a = synthetic_rdg(&cfg).unwrap();
        assert_eq!(a, synthetic_rdg(&cfg).unwrap());
        assert_eq!(a.scenarios().len(), 12);
        assert_eq!(a.utterances().len(), 12 * 12);
        assert_eq!(a.contexts().len(), 36);
        let other = synthetic_rdg(&SyntheticConfig { seed: 1, ..cfg.clone() }).unwrap();
        assert_ne!(a, other);
        let ed = synthetic_ed(&cfg).unwrap();
        assert_eq!(ed.conversations.len(), 96);
    }

    #[test]
    fn exact_affect_without_noise() {
        let cfg = SyntheticConfig {
            affect_noise: 0.0,
            ..SyntheticConfig::default()
        };
        for u in synthetic_rdg(&cfg).unwrap().utterances() {
            let want = match u.affect_target {
                AffectTarget::Excited => 3.0,
                AffectTarget::Indifferent => 0.0,
                AffectTarget::Impatient => -3.0,
            };
            assert_eq!(u.aggregated.unwrap().affect, Some(want), "{}", u.text);
        }
    }

    #[test]
    fn files_reload() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig::default();
        let rdg = synthetic_rdg(&cfg).unwrap();
        let ed = synthetic_ed(&cfg).unwrap();
        let p = dir.path();
        write_rdg(&rdg, std::fs::File::create(p.join("rdg.jsonl")).unwrap()).unwrap();
        write_ed(&ed, std::fs::File::create(p.join("ed.jsonl")).unwrap()).unwrap();
        write_label_manifest(&ed.labels, std::fs::File::create(p.join("labels.txt")).unwrap()).unwrap();
        assert_eq!(load_rdg(p.join("rdg.jsonl")).unwrap(), rdg);
        assert_eq!(load_ed(p.join("ed.jsonl"), p.join("labels.txt")).unwrap(), ed);
    }

    #[test]
    fn lexicon_and_truth() {
        assert_eq!(lexicon_affect("wow the key is by the well have fun"), 3.0);
        assert_eq!(lexicon_affect("ugh come on hurry now"), -4.0);
        assert_eq!(lexicon_affect("okay"), 0.0);
        let t = heuristic_truth("u", "ugh the key is by the well", 0.5);
        assert_eq!(
            (t.typicality, t.offensiveness, t.forwardness, t.affect),
            (3.0, 2.0, 4.0, -1.5)
        );
        assert_eq!(heuristic_truth("u", "", 0.0).typicality, 0.0);
    }
}
