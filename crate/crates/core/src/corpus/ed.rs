use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, ED_LABEL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdConversation {
    pub id: String,
    pub situation: String,
    #[serde(rename = "emotion")]
    pub emotion_label: String,
    pub turns: Vec<Turn>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum EdRecord {
    Conversation(EdConversation),
}

/// The fixed 32-entry emotion label set; a label's class index is its line
/// position in the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionLabels {
    labels: Vec<String>,
}

impl EmotionLabels {
    pub fn new(labels: Vec<String>) -> Result<Self, CorpusError> {
        if labels.len() != ED_LABEL_COUNT {
            return Err(CorpusError::ManifestCount {
                found: labels.len(),
                expected: ED_LABEL_COUNT,
            });
        }
        let unique: HashSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(CorpusError::Invalid {
                line: 0,
                reason: "label manifest contains duplicates".into(),
            });
        }
        Ok(Self { labels })
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn load_label_manifest(path: impl AsRef<Path>) -> Result<EmotionLabels, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let labels = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    EmotionLabels::new(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdCorpus {
    pub labels: EmotionLabels,
    pub conversations: Vec<EdConversation>,
}

impl EdCorpus {
    pub fn label_index(&self, conv: &EdConversation) -> usize {
        self.labels
            .index_of(&conv.emotion_label)
            .expect("labels validated at load")
    }
}

fn validate(conv: &EdConversation, labels: &EmotionLabels, line: usize) -> Result<(), CorpusError> {
    if labels.index_of(&conv.emotion_label).is_none() {
        return Err(CorpusError::UnknownLabel {
            conversation: conv.id.clone(),
            label: conv.emotion_label.clone(),
        });
    }
    if conv.turns.is_empty() || conv.turns.len() > 6 {
        return Err(CorpusError::Invalid {
            line,
            reason: format!("conversation {} has {} turns (1-6 allowed)", conv.id, conv.turns.len()),
        });
    }
    if conv.turns.windows(2).any(|w| w[0].speaker == w[1].speaker) {
        return Err(CorpusError::Invalid {
            line,
            reason: format!("conversation {}: speakers do not alternate", conv.id),
        });
    }
    if conv.turns.iter().any(|t| t.text.trim().is_empty()) {
        return Err(CorpusError::Invalid {
            line,
            reason: format!("conversation {}: empty turn text", conv.id),
        });
    }
    Ok(())
}

pub fn load_ed(path: impl AsRef<Path>, manifest: impl AsRef<Path>) -> Result<EdCorpus, CorpusError> {
    let labels = load_label_manifest(manifest)?;
    let file = std::fs::File::open(path)?;
    read_ed(BufReader::new(file), labels)
}

pub(crate) fn read_ed<R: BufRead>(reader: R, labels: EmotionLabels) -> Result<EdCorpus, CorpusError> {
    let mut conversations = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let EdRecord::Conversation(conv) = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        validate(&conv, &labels, i + 1)?;
        if !ids.insert(conv.id.clone()) {
            return Err(CorpusError::DuplicateId(conv.id));
        }
        conversations.push(conv);
    }
    Ok(EdCorpus { labels, conversations })
}

/// Writes one conversation record per line.
pub fn write_ed<W: Write>(corpus: &EdCorpus, mut w: W) -> Result<(), CorpusError> {
    for conv in &corpus.conversations {
        let rec = EdRecord::Conversation(conv.clone());
        writeln!(w, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
    }
    Ok(())
}

/// Writes the label manifest, one label per line.
pub fn write_label_manifest<W: Write>(labels: &EmotionLabels, mut w: W) -> Result<(), CorpusError> {
    for label in labels.labels() {
        writeln!(w, "{label}")?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) fn test_labels() -> EmotionLabels {
    let mut labels: Vec<String> = ["proud", "afraid", "angry", "joyful"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    labels.extend((labels.len()..ED_LABEL_COUNT).map(|i| format!("emotion{i}")));
    EmotionLabels::new(labels).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_known_label() {
        let line = r#"{"kind":"conversation","id":"c1","situation":"I won a prize.","emotion":"proud","turns":[{"speaker":"A","text":"I won!"},{"speaker":"B","text":"Congrats!"}]}"#;
        let c = read_ed(line.as_bytes(), test_labels()).unwrap();
        assert_eq!(c.conversations.len(), 1);
        assert_eq!(c.label_index(&c.conversations[0]), 0);
    }

    #[test]
    fn write_read_round_trip() {
        let line = r#"{"kind":"conversation","id":"c1","situation":"I won a prize.","emotion":"proud","turns":[{"speaker":"A","text":"I won!"},{"speaker":"B","text":"Congrats!"}]}"#;
        let c = read_ed(line.as_bytes(), test_labels()).unwrap();
        let mut buf = Vec::new();
        write_ed(&c, &mut buf).unwrap();
        assert_eq!(read_ed(buf.as_slice(), test_labels()).unwrap(), c);
        let mut labels = Vec::new();
        write_label_manifest(&c.labels, &mut labels).unwrap();
        assert_eq!(String::from_utf8(labels).unwrap().lines().count(), 32);
    }

    #[test]
    fn rejects_unknown_label() {
        let line = r#"{"kind":"conversation","id":"c1","situation":"s","emotion":"ecstatic2","turns":[{"speaker":"A","text":"x"}]}"#;
        assert!(matches!(
            read_ed(line.as_bytes(), test_labels()),
            Err(CorpusError::UnknownLabel { .. })
        ));
    }

    #[test]
    fn rejects_empty_turns_and_non_alternating() {
        let empty = r#"{"kind":"conversation","id":"c1","situation":"s","emotion":"proud","turns":[]}"#;
        assert!(read_ed(empty.as_bytes(), test_labels()).is_err());
        let same = r#"{"kind":"conversation","id":"c1","situation":"s","emotion":"proud","turns":[{"speaker":"A","text":"x"},{"speaker":"A","text":"y"}]}"#;
        assert!(read_ed(same.as_bytes(), test_labels()).is_err());
    }

    #[test]
    fn manifest_must_have_32_entries() {
        let labels: Vec<String> = (0..31).map(|i| format!("l{i}")).collect();
        assert!(matches!(
            EmotionLabels::new(labels),
            Err(CorpusError::ManifestCount {
                found: 31,
                expected: 32
            })
        ));
    }

    #[test]
    fn manifest_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        let text: String = (0..31).map(|i| format!("l{i}\n")).collect();
        std::fs::write(&path, &text).unwrap();
        assert!(load_label_manifest(&path).is_err());
        std::fs::write(&path, format!("{text}l31\n")).unwrap();
        assert_eq!(load_label_manifest(&path).unwrap().len(), 32);
    }
}
