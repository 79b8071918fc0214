use serde::{Deserialize, Serialize};

use super::{AffectTarget, CorpusError, EdConversation, EdCorpus, Scenario, Utterance};
use crate::tokenizer::{TokenId, Vocab};

/// Supervision target for the affect head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AffectLabel {
    /// Aggregated affect score on the combined [-4, 4] scale.
    Score(f64),
    /// Emotion class index.
    Class(usize),
}

/// A token sequence `context ++ response ++ <eos>`.
///
/// `target_mask[p]` is true exactly for the response tokens and the closing
/// `<eos>`, i.e. positions `context_len..input_ids.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input_ids: Vec<TokenId>,
    pub target_mask: Vec<bool>,
    pub affect: Option<AffectLabel>,
    pub context_len: usize,
    /// Scenario id (RDG) or conversation id (ED); distractors are drawn from
    /// other groups.
    pub group: String,
}

impl TrainingExample {
    pub fn context(&self) -> &[TokenId] {
        &self.input_ids[..self.context_len]
    }

    /// Response tokens without the closing `<eos>`.
    pub fn response(&self) -> &[TokenId] {
        &self.input_ids[self.context_len..self.input_ids.len() - 1]
    }

    pub fn target_count(&self) -> usize {
        self.target_mask.iter().filter(|&&m| m).count()
    }

    /// Same context followed by another response, truncated like the original.
    pub fn with_response(
        &self,
        response: &[TokenId],
        vocab: &Vocab,
        max_seq_len: usize,
    ) -> Result<Vec<TokenId>, CorpusError> {
        let ctx = self.context();
        // <bos> <ctx> are the fixed prefix; the trailing [<aff:X>] <sep> is
        // kept; everything between is droppable body.
        let mut suffix_len = 1;
        if ctx.len() >= 4 && vocab.is_affect(ctx[ctx.len() - 2]) {
            suffix_len = 2;
        }
        let body = &ctx[2..ctx.len() - suffix_len];
        let suffix_start = ctx.len() - suffix_len;
        let (ids, _) = assemble(
            &ctx[..2],
            body,
            &ctx[suffix_start..],
            response,
            vocab.eos(),
            max_seq_len,
        )?;
        Ok(ids)
    }
}

/// Joins `prefix body suffix response <eos>`, dropping body tokens from the
/// left until the sequence fits. Returns the ids and the context length.
fn assemble(
    prefix: &[TokenId],
    body: &[TokenId],
    suffix: &[TokenId],
    response: &[TokenId],
    eos: TokenId,
    max_seq_len: usize,
) -> Result<(Vec<TokenId>, usize), CorpusError> {
    let fixed = prefix.len() + suffix.len() + response.len() + 1;
    if fixed > max_seq_len {
        return Err(CorpusError::ResponseTooLong {
            len: response.len() + 1,
            max_seq_len,
        });
    }
    let keep = body.len().min(max_seq_len - fixed);
    let body = &body[body.len() - keep..];
    let mut ids = Vec::with_capacity(fixed + keep);
    ids.extend_from_slice(prefix);
    ids.extend_from_slice(body);
    ids.extend_from_slice(suffix);
    let context_len = ids.len();
    ids.extend_from_slice(response);
    ids.push(eos);
    Ok((ids, context_len))
}

fn finish(ids: Vec<TokenId>, context_len: usize, affect: Option<AffectLabel>, group: &str) -> TrainingExample {
    let target_mask = (0..ids.len()).map(|p| p >= context_len).collect();
    TrainingExample {
        input_ids: ids,
        target_mask,
        affect,
        context_len,
        group: group.to_string(),
    }
}

/// Generation context for a scenario and affect:
/// `<bos> <ctx> description <aff:X> <sep>`.
pub fn rdg_context(description: &str, affect: AffectTarget, vocab: &Vocab) -> Vec<TokenId> {
    let mut ids = vec![vocab.bos(), vocab.ctx()];
    ids.extend(vocab.encode(description));
    ids.push(vocab.affect(affect));
    ids.push(vocab.sep());
    ids
}

/// RDG layout: `<bos> <ctx> scenario <aff:X> <sep> response <eos>`, labelled
/// with the utterance's aggregated affect score when present.
pub fn rdg_example(
    utterance: &Utterance,
    scenario: &Scenario,
    vocab: &Vocab,
    max_seq_len: usize,
) -> Result<TrainingExample, CorpusError> {
    let body = vocab.encode(&scenario.description);
    let (ids, context_len) = assemble(
        &[vocab.bos(), vocab.ctx()],
        &body,
        &[vocab.affect(utterance.affect_target), vocab.sep()],
        &vocab.encode(&utterance.text),
        vocab.eos(),
        max_seq_len,
    )?;
    let affect = utterance.aggregated.and_then(|s| s.affect).map(AffectLabel::Score);
    Ok(finish(ids, context_len, affect, &scenario.id))
}

/// ED layout for predicting turn `index`:
/// `<bos> <ctx> situation (<sep> earlier turn)* <sep> turn <eos>`.
pub fn ed_turn_example(
    conv: &EdConversation,
    index: usize,
    label: usize,
    vocab: &Vocab,
    max_seq_len: usize,
) -> Result<TrainingExample, CorpusError> {
    if index >= conv.turns.len() {
        return Err(CorpusError::TurnOutOfRange {
            index,
            turns: conv.turns.len(),
        });
    }
    let mut body = vocab.encode(&conv.situation);
    for turn in &conv.turns[..index] {
        body.push(vocab.sep());
        body.extend(vocab.encode(&turn.text));
    }
    let (ids, context_len) = assemble(
        &[vocab.bos(), vocab.ctx()],
        &body,
        &[vocab.sep()],
        &vocab.encode(&conv.turns[index].text),
        vocab.eos(),
        max_seq_len,
    )?;
    Ok(finish(ids, context_len, Some(AffectLabel::Class(label)), &conv.id))
}

/// One example per turn; every turn inherits the conversation's label.
pub fn ed_examples(corpus: &EdCorpus, vocab: &Vocab, max_seq_len: usize) -> Result<Vec<TrainingExample>, CorpusError> {
    let mut out = Vec::new();
    for conv in &corpus.conversations {
        let label = corpus.label_index(conv);
        for i in 0..conv.turns.len() {
            out.push(ed_turn_example(conv, i, label, vocab, max_seq_len)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{RatingScores, Source, Speaker, SplitTag, Turn};
    use proptest::prelude::*;

    fn scenario(desc: &str) -> Scenario {
        Scenario {
            id: "s1".into(),
            description: desc.into(),
            affect_target: AffectTarget::Excited,
            split_tag: SplitTag::Train,
        }
    }

    fn utterance(text: &str, affect: Option<f64>) -> Utterance {
        Utterance {
            id: "u1".into(),
            scenario_id: "s1".into(),
            affect_target: AffectTarget::Impatient,
            text: text.into(),
            source: Source::Human,
            aggregated: affect.map(|a| RatingScores {
                affect: Some(a),
                ..Default::default()
            }),
        }
    }

    fn mask_matches_final_sep(ex: &TrainingExample, vocab: &Vocab) -> bool {
        let last_sep = ex.input_ids.iter().rposition(|&t| t == vocab.sep()).unwrap();
        let eos = ex.input_ids.len() - 1;
        ex.input_ids[eos] == vocab.eos()
            && ex
                .target_mask
                .iter()
                .enumerate()
                .all(|(p, &m)| m == (p > last_sep && p <= eos))
    }

    #[test]
    fn rdg_layout_and_label() {
        let vocab = Vocab::fit(["the player waits", "hurry up now"], 64).unwrap();
        let ex = rdg_example(
            &utterance("hurry up now", Some(1.6)),
            &scenario("the player waits"),
            &vocab,
            64,
        )
        .unwrap();
        assert_eq!(ex.affect, Some(AffectLabel::Score(1.6)));
        let expected: Vec<TokenId> = [vocab.bos(), vocab.ctx()]
            .into_iter()
            .chain(vocab.encode("the player waits"))
            .chain([vocab.affect(AffectTarget::Impatient), vocab.sep()])
            .chain(vocab.encode("hurry up now"))
            .chain([vocab.eos()])
            .collect();
        assert_eq!(ex.input_ids, expected);
        assert!(ex.target_mask[..ex.context_len].iter().all(|&m| !m));
        assert_eq!(ex.target_count(), 4);
        assert!(mask_matches_final_sep(&ex, &vocab));
        assert_eq!(ex.response(), vocab.encode("hurry up now").as_slice());
    }

    #[test]
    fn ed_turn_three_of_four() {
        let vocab = Vocab::fit(["i lost my keys", "one", "two", "three", "four"], 64).unwrap();
        let conv = EdConversation {
            id: "c1".into(),
            situation: "i lost my keys".into(),
            emotion_label: "afraid".into(),
            turns: ["one", "two", "three", "four"]
                .iter()
                .enumerate()
                .map(|(i, t)| Turn {
                    speaker: if i % 2 == 0 { Speaker::A } else { Speaker::B },
                    text: t.to_string(),
                })
                .collect(),
        };
        let ex = ed_turn_example(&conv, 2, 1, &vocab, 64).unwrap();
        let expected: Vec<TokenId> = [vocab.bos(), vocab.ctx()]
            .into_iter()
            .chain(vocab.encode("i lost my keys"))
            .chain([vocab.sep()])
            .chain(vocab.encode("one"))
            .chain([vocab.sep()])
            .chain(vocab.encode("two"))
            .chain([vocab.sep()])
            .chain(vocab.encode("three"))
            .chain([vocab.eos()])
            .collect();
        assert_eq!(ex.input_ids, expected);
        assert_eq!(ex.affect, Some(AffectLabel::Class(1)));
        assert_eq!(ex.response(), vocab.encode("three").as_slice());
        assert!(mask_matches_final_sep(&ex, &vocab));
        assert!(ed_turn_example(&conv, 4, 1, &vocab, 64).is_err());
    }

    #[test]
    fn long_context_truncated_from_left() {
        let words: Vec<String> = (0..500).map(|i| format!("w{i}")).collect();
        let desc = words.join(" ");
        let vocab = Vocab::fit([desc.as_str(), "keep this reply"], 1024).unwrap();
        let ex = rdg_example(&utterance("keep this reply", None), &scenario(&desc), &vocab, 128).unwrap();
        assert_eq!(ex.input_ids.len(), 128);
        assert_eq!(ex.response(), vocab.encode("keep this reply").as_slice());
        assert_eq!(&ex.input_ids[..2], &[vocab.bos(), vocab.ctx()]);
        // the rightmost description tokens survive
        assert_eq!(ex.input_ids[ex.context_len - 3], vocab.id("w499").unwrap());
        assert!(mask_matches_final_sep(&ex, &vocab));
    }

    #[test]
    fn response_too_long_is_error() {
        let reply: Vec<String> = (0..20).map(|i| format!("r{i}")).collect();
        let reply = reply.join(" ");
        let vocab = Vocab::fit([reply.as_str()], 64).unwrap();
        assert!(matches!(
            rdg_example(&utterance(&reply, None), &scenario("x"), &vocab, 16),
            Err(CorpusError::ResponseTooLong { .. })
        ));
    }

    #[test]
    fn with_response_keeps_context() {
        let vocab = Vocab::fit(["the player waits", "hurry up", "great job team"], 64).unwrap();
        let ex = rdg_example(&utterance("hurry up", None), &scenario("the player waits"), &vocab, 64).unwrap();
        let other = vocab.encode("great job team");
        let ids = ex.with_response(&other, &vocab, 64).unwrap();
        assert_eq!(&ids[..ex.context_len], ex.context());
        assert_eq!(&ids[ex.context_len..ids.len() - 1], other.as_slice());
        let short = ex.with_response(&other, &vocab, 9).unwrap();
        assert_eq!(short.len(), 9);
        assert_eq!(short[short.len() - 5], vocab.sep());
    }

    proptest! {
        #[test]
        fn mask_selects_after_final_sep(desc_len in 0usize..40, reply_len in 1usize..10, max in 16usize..48) {
            let desc: Vec<String> = (0..desc_len).map(|i| format!("d{i}")).collect();
            let reply: Vec<String> = (0..reply_len).map(|i| format!("r{i}")).collect();
            let (desc, reply) = (desc.join(" "), reply.join(" "));
            let vocab = Vocab::fit([desc.as_str(), reply.as_str()], 256).unwrap();
            let mut s = scenario("x");
            s.description = desc;
            let ex = rdg_example(&utterance(&reply, Some(0.5)), &s, &vocab, max).unwrap();
            prop_assert!(ex.input_ids.len() <= max);
            prop_assert!(mask_matches_final_sep(&ex, &vocab));
        }
    }
}
