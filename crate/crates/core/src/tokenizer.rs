//! Word-level tokenizer with structural and affect-conditioning special tokens.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::AffectTarget;

pub type TokenId = u32;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const SEP: &str = "<sep>";
pub const CTX: &str = "<ctx>";

/// Special tokens in their fixed serialization order. They always occupy ids
/// `0..SPECIALS.len()`.
pub const SPECIALS: [&str; 9] = [
    PAD,
    UNK,
    BOS,
    EOS,
    SEP,
    CTX,
    "<aff:excited>",
    "<aff:indifferent>",
    "<aff:impatient>",
];

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: TokenId, size: usize },
    #[error("max_vocab {max_vocab} must exceed the {specials} special tokens")]
    VocabTooSmall { max_vocab: usize, specials: usize },
    #[error("vocabulary file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercases and splits text into word types. Runs of alphanumeric
/// characters form one token; every other non-whitespace character is a
/// token on its own.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Canonical surface form: lowercase, tokens separated by single spaces.
pub fn normalize(text: &str) -> String {
    pre_tokenize(text).join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Builds a vocabulary from raw texts, keeping the `max_vocab - 9` most
    /// frequent types. Frequency ties are broken lexicographically.
    pub fn fit<I, S>(texts: I, max_vocab: usize) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if max_vocab <= SPECIALS.len() {
            return Err(TokenizerError::VocabTooSmall {
                max_vocab,
                specials: SPECIALS.len(),
            });
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for tok in pre_tokenize(text.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_vocab - SPECIALS.len());

        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn pad(&self) -> TokenId {
        0
    }
    pub fn unk(&self) -> TokenId {
        1
    }
    pub fn bos(&self) -> TokenId {
        2
    }
    pub fn eos(&self) -> TokenId {
        3
    }
    pub fn sep(&self) -> TokenId {
        4
    }
    pub fn ctx(&self) -> TokenId {
        5
    }

    pub fn affect(&self, target: AffectTarget) -> TokenId {
        match target {
            AffectTarget::Excited => 6,
            AffectTarget::Indifferent => 7,
            AffectTarget::Impatient => 8,
        }
    }

    pub fn is_affect(&self, id: TokenId) -> bool {
        (6..9).contains(&id)
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        (id as usize) < SPECIALS.len()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        pre_tokenize(text)
            .iter()
            .map(|t| self.id(t).unwrap_or(self.unk()))
            .collect()
    }

    /// Joins surface tokens with single spaces. Special tokens are dropped.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self
                .token(id)
                .ok_or(TokenizerError::IdOutOfRange { id, size: self.len() })?;
            if !self.is_special(id) {
                words.push(tok);
            }
        }
        Ok(words.join(" "))
    }

    /// One token per line; the line number is the id.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TokenizerError> {
        for tok in &self.tokens {
            writeln!(w, "{tok}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("tokens are valid UTF-8")
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, TokenizerError> {
        let mut tokens = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(TokenizerError::Format {
                    line: i + 1,
                    reason: "empty or whitespace-bearing token".into(),
                });
            }
            tokens.push(line);
        }
        for (i, special) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(TokenizerError::Format {
                    line: i + 1,
                    reason: format!("expected special token {special}"),
                });
            }
        }
        let vocab = Self::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(TokenizerError::Format {
                line: 0,
                reason: "duplicate tokens".into(),
            });
        }
        Ok(vocab)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, TokenizerError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// SHA-256 of the serialized vocabulary, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fit_keeps_words_and_specials() {
        let v = Vocab::fit(["Hello world"], 64).unwrap();
        assert_eq!(v.len(), SPECIALS.len() + 2);
        assert!(v.id("hello").is_some());
        assert!(v.id("world").is_some());
        for s in SPECIALS {
            assert!(v.id(s).is_some());
        }
    }

    #[test]
    fn fit_empty_gives_specials_only() {
        let v = Vocab::fit(Vec::<String>::new(), 64).unwrap();
        assert_eq!(v.len(), SPECIALS.len());
    }

    #[test]
    fn fit_is_deterministic_and_breaks_ties_lexicographically() {
        let texts = ["b a c a", "c b d"];
        let v1 = Vocab::fit(texts, 12).unwrap();
        let v2 = Vocab::fit(texts, 12).unwrap();
        assert_eq!(v1, v2);
        // a, b, c occur twice; d once and is cut.
        assert_eq!(v1.id("a"), Some(9));
        assert_eq!(v1.id("b"), Some(10));
        assert_eq!(v1.id("c"), Some(11));
        assert_eq!(v1.id("d"), None);
    }

    #[test]
    fn fit_rejects_tiny_vocab() {
        assert!(Vocab::fit(["x"], SPECIALS.len()).is_err());
    }

    #[test]
    fn encode_maps_unknown_to_unk() {
        let v = Vocab::fit(["hello world"], 64).unwrap();
        assert_eq!(
            v.encode("hello world"),
            vec![v.id("hello").unwrap(), v.id("world").unwrap()]
        );
        assert_eq!(v.encode("zyxxyz"), vec![v.unk()]);
        assert!(v.encode("").is_empty());
    }

    #[test]
    fn punctuation_splits() {
        assert_eq!(pre_tokenize("Hi, there!"), vec!["hi", ",", "there", "!"]);
        assert_eq!(pre_tokenize("<sep>"), vec!["<", "sep", ">"]);
    }

    #[test]
    fn decode_drops_specials_and_checks_range() {
        let v = Vocab::fit(["hello world"], 64).unwrap();
        assert_eq!(v.decode(&v.encode("hello world")).unwrap(), "hello world");
        let h = v.id("hello").unwrap();
        assert_eq!(v.decode(&[v.bos(), h, v.eos()]).unwrap(), "hello");
        assert!(matches!(
            v.decode(&[v.len() as TokenId + 5]),
            Err(TokenizerError::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn serialization_round_trip() {
        let v = Vocab::fit(["the quick brown fox", "the lazy dog"], 32).unwrap();
        let text = v.to_text();
        assert!(text.starts_with("<pad>\n<unk>\n<bos>\n"));
        let back = Vocab::read_from(text.as_bytes()).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.hash(), back.hash());
    }

    #[test]
    fn read_rejects_missing_specials() {
        assert!(Vocab::read_from("hello\nworld\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn decode_encode_is_normalize(words in prop::collection::vec("[a-zA-Z0-9]{1,6}", 0..12),
                                      seps in prop::collection::vec(" {1,3}", 12)) {
            let mut text = String::new();
            for (w, s) in words.iter().zip(&seps) {
                text.push_str(w);
                text.push_str(s);
            }
            let v = Vocab::fit([text.as_str()], 4096).unwrap();
            let ids = v.encode(&text);
            prop_assert!(ids.iter().all(|&id| !v.is_special(id)));
            prop_assert_eq!(v.decode(&ids).unwrap(), normalize(&text));
        }

        #[test]
        fn encode_never_emits_specials(text in "\\PC{0,40}") {
            let v = Vocab::fit(["<pad> <eos> hello"], 64).unwrap();
            prop_assert!(v.encode(&text).iter().all(|&id| id == v.unk() || !v.is_special(id)));
        }
    }
}
