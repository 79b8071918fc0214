//! Corpus loading, split, example building and the line-delimited record
//! files exchanged between subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mtaf::corpus::{
    ed_examples, load_ed, load_rdg, make_split, rdg_example, AffectTarget, CorpusSplit, EdCorpus, RdgCorpus,
    TrainingExample,
};
use mtaf::model::Variant;
use mtaf::tokenizer::Vocab;
use mtaf::trainer::TrainLog;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Plan};
use crate::error::{CliError, Result};

pub struct Data {
    pub rdg: RdgCorpus,
    pub split: CorpusSplit,
    pub ed: Option<EdCorpus>,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Data> {
    let c = &cfg.corpus;
    let rdg = load_rdg(&c.rdg).map_err(|e| CliError::from(e).at(&c.rdg))?;
    let split = make_split(&rdg, c.split_seed, cfg.protocol.scenarios_per_split)?;
    let ed = match (&c.ed, &c.labels) {
        (Some(ed), Some(labels)) => Some(load_ed(ed, labels).map_err(|e| CliError::from(e).at(ed))?),
        _ => None,
    };
    Ok(Data { rdg, split, ed })
}

/// Files the loaded data came from, for manifests.
pub fn data_inputs(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    let c = &cfg.corpus;
    std::iter::once(c.rdg.clone())
        .chain(c.ed.clone())
        .chain(c.labels.clone())
        .collect()
}

impl Data {
    /// Vocabulary texts: every scenario description (evaluation contexts
    /// must be encodable), training-side RDG utterances and all ED text.
    pub fn vocab_texts(&self) -> Vec<String> {
        let train: BTreeSet<&str> = self.split.train_utterances.iter().map(String::as_str).collect();
        let mut texts: Vec<String> = self.rdg.scenarios().iter().map(|s| s.description.clone()).collect();
        texts.extend(
            self.rdg
                .utterances()
                .iter()
                .filter(|u| train.contains(u.id.as_str()))
                .map(|u| u.text.clone()),
        );
        if let Some(ed) = &self.ed {
            for c in &ed.conversations {
                texts.push(c.situation.clone());
                texts.extend(c.turns.iter().map(|t| t.text.clone()));
            }
        }
        texts
    }

    fn rdg_examples(&self, ids: &[String], vocab: &Vocab, max_seq_len: usize) -> Result<Vec<TrainingExample>> {
        ids.iter()
            .map(|id| {
                let u = self
                    .rdg
                    .utterance(id)
                    .ok_or_else(|| CliError::Data(format!("split names unknown utterance {id}")))?;
                let s = self.rdg.scenario(&u.scenario_id).expect("references resolved at load");
                Ok(rdg_example(u, s, vocab, max_seq_len)?)
            })
            .collect()
    }

    pub fn rdg_train(&self, vocab: &Vocab, max_seq_len: usize) -> Result<Vec<TrainingExample>> {
        self.rdg_examples(&self.split.train_utterances, vocab, max_seq_len)
    }

    pub fn rdg_test(&self, vocab: &Vocab, max_seq_len: usize) -> Result<Vec<TrainingExample>> {
        self.rdg_examples(&self.split.test_utterances, vocab, max_seq_len)
    }

    pub fn ed_train(&self, vocab: &Vocab, max_seq_len: usize) -> Result<Option<Vec<TrainingExample>>> {
        self.ed
            .as_ref()
            .map(|ed| ed_examples(ed, vocab, max_seq_len).map_err(CliError::from))
            .transpose()
    }
}

/// `train_log.json` in a model directory: provenance plus the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainInfo {
    pub model: String,
    pub variant: Variant,
    pub plan: Plan,
    pub vocab_sha256: String,
    pub checkpoint_sha256: String,
    pub log: TrainLog,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.mtaf";
pub const TRAIN_INFO_FILE: &str = "train_log.json";

/// One generated utterance with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub model: String,
    pub variant: Variant,
    pub plan: Plan,
    pub scenario_id: String,
    /// `seen` or `unseen` during training.
    pub split: String,
    pub affect: AffectTarget,
    pub sample: usize,
    pub seed: u64,
    pub text: String,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Data(format!("{}: line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = create(path)?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).expect("record serializes");
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Creates a file, making its parent directory first.
pub fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

pub fn load_vocab(path: &Path) -> Result<Vocab> {
    Vocab::load(path).map_err(|e| CliError::from(e).at(path))
}
