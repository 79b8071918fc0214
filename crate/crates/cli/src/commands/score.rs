use std::path::{Path, PathBuf};

use mtaf::metrics::{bleu, perplexity, UtteranceMetrics};
use mtaf::tokenizer::pre_tokenize;
use mtaf::trainer::load_checkpoint;
use serde::{Deserialize, Serialize};

use super::ConfigArgs;
use crate::config::LoadedConfig;
use crate::data::{
    data_inputs, load_data, load_vocab, read_jsonl, write_json, write_jsonl, GenerationRecord, CHECKPOINT_FILE,
};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

/// BLEU order used for every score.
pub const BLEU_ORDER: usize = 4;

#[derive(Debug, Clone, clap::Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub generations: PathBuf,
    /// Per-utterance metric records to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Model directory; adds test-split perplexity to the summary.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Vocabulary, required with `--model`.
    #[arg(long, requires = "model")]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub models: Vec<String>,
    pub n_utterances: usize,
    pub average_bleu: f64,
    pub perplexity: Option<f64>,
    pub n_test_examples: Option<usize>,
}

pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

pub fn run(args: &ScoreArgs) -> Result<()> {
    let cfg = args.config.load(&[])?;
    let model = match (&args.model, &args.vocab) {
        (Some(m), Some(v)) => Some((m.as_path(), v.as_path())),
        (Some(_), None) => return Err(CliError::Usage("--model needs --vocab".into())),
        _ => None,
    };
    score(&cfg, &args.generations, model, &args.out).map(|_| ())
}

/// Sentence BLEU of each generated line against the human utterances of the
/// same scenario and affect. An empty generation scores 0.
pub fn score(
    cfg: &LoadedConfig,
    generations: &Path,
    model: Option<(&Path, &Path)>,
    out: &Path,
) -> Result<ScoreSummary> {
    let c = &cfg.resolved;
    let data = load_data(c)?;
    let gens: Vec<GenerationRecord> = read_jsonl(generations)?;
    let mut metrics = Vec::with_capacity(gens.len());
    for g in &gens {
        if data.rdg.scenario(&g.scenario_id).is_none() {
            return Err(CliError::Data(format!("{}: unknown scenario {}", g.id, g.scenario_id)));
        }
        let refs: Vec<Vec<String>> = data
            .rdg
            .references(&g.scenario_id, g.affect)
            .iter()
            .map(|u| pre_tokenize(&u.text))
            .collect();
        let cand = pre_tokenize(&g.text);
        let b = if cand.is_empty() {
            0.0
        } else {
            bleu(&cand, &refs, BLEU_ORDER, true)
                .map_err(|e| CliError::Data(format!("{}: {e}", g.id)))?
                .score
        };
        metrics.push(UtteranceMetrics {
            utterance_id: g.id.clone(),
            model: g.model.clone(),
            scenario_id: g.scenario_id.clone(),
            affect: g.affect,
            bleu: b,
            n_references: refs.len(),
        });
    }
    let mut models: Vec<String> = gens.iter().map(|g| g.model.clone()).collect();
    models.sort();
    models.dedup();
    let mut inputs = data_inputs(c);
    inputs.push(generations.to_path_buf());
    let (perplexity, n_test) = match model {
        Some((dir, vocab_path)) => {
            let vocab = load_vocab(vocab_path)?;
            let ckpt_path = dir.join(CHECKPOINT_FILE);
            let ckpt = load_checkpoint(&ckpt_path).map_err(|e| CliError::from(e).at(&ckpt_path))?;
            ckpt.check_vocab(&vocab).map_err(|e| CliError::from(e).at(&ckpt_path))?;
            let test = data.rdg_test(&vocab, ckpt.config().max_seq_len)?;
            inputs.extend([vocab_path.to_path_buf(), ckpt_path]);
            (Some(perplexity(&ckpt.params, &test)?), Some(test.len()))
        }
        None => (None, None),
    };
    let summary = ScoreSummary {
        models,
        n_utterances: metrics.len(),
        average_bleu: if metrics.is_empty() {
            0.0
        } else {
            metrics.iter().map(|m| m.bleu).sum::<f64>() / metrics.len() as f64
        },
        perplexity,
        n_test_examples: n_test,
    };
    write_jsonl(out, &metrics)?;
    let sum_path = summary_path(out);
    write_json(&sum_path, &summary)?;
    let ins: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut m = Manifest::new("score").with_config(cfg);
    m.seed("split", c.corpus.split_seed).param("bleu_order", BLEU_ORDER);
    m.write(out, &ins, &[out, &sum_path])?;
    Ok(summary)
}
