//! Experiment configuration: one TOML file with a section per module.
//! Relative paths resolve against the file's directory; `--set` overrides
//! are applied to the parsed table before it is typed.

use std::path::{Path, PathBuf};

use mtaf::corpus::AffectTarget;
use mtaf::generator::DecodeConfig;
use mtaf::model::{AffectMode, LossWeights, ModelConfig, Variant};
use mtaf::trainer::{CorpusId, PhasePlan, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub rdg: PathBuf,
    #[serde(default)]
    pub ed: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
}

fn default_split_seed() -> u64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub max_vocab: usize,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        Self { max_vocab: 512 }
    }
}

/// Model dimensions; vocabulary size comes from the fitted vocabulary and
/// the variant from the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub dropout_rate: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            d_ff: 32,
            max_seq_len: 48,
            dropout_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs of the intermediate ED phase; defaults to `epochs`.
    pub ed_epochs: Option<usize>,
    pub seed: u64,
    pub weights: LossWeights,
    pub grad_clip: Option<f64>,
    pub validation_fraction: f64,
    pub max_steps: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            batch_size: 8,
            epochs: 10,
            ed_epochs: None,
            seed: 0,
            weights: LossWeights::default(),
            grad_clip: Some(1.0),
            validation_fraction: 0.1,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// Seen and unseen evaluation scenarios each.
    pub scenarios_per_split: usize,
    pub samples_per_context: usize,
    /// Number of affect targets used, taken from excited, indifferent,
    /// impatient in that order.
    pub affects: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            scenarios_per_split: 3,
            samples_per_context: 5,
            affects: 3,
        }
    }
}

impl ProtocolSection {
    pub fn affect_targets(&self) -> &'static [AffectTarget] {
        &AffectTarget::ALL[..self.affects]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatingSection {
    pub n_raters: usize,
    /// Simulated raters answer `round(truth + u)`, `u` uniform on
    /// `-noise..=noise`.
    pub noise: i32,
    pub seed: u64,
    pub min_tasks: usize,
    pub alpha: f64,
}

impl Default for RatingSection {
    fn default() -> Self {
        Self {
            n_raters: 5,
            noise: 1,
            seed: 0,
            min_tasks: 2,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusSection,
    #[serde(default)]
    pub tokenizer: TokenizerSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub decode: DecodeConfig,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub rating: RatingSection,
}

/// Training corpus sequence of an experiment cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
pub enum Plan {
    #[serde(rename = "rdg")]
    #[value(name = "rdg")]
    Rdg,
    #[serde(rename = "ed-rdg")]
    #[value(name = "ed-rdg")]
    EdRdg,
}

impl Plan {
    pub const ALL: [Plan; 2] = [Plan::Rdg, Plan::EdRdg];

    pub fn as_str(self) -> &'static str {
        match self {
            Plan::Rdg => "rdg",
            Plan::EdRdg => "ed-rdg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VariantArg {
    #[value(name = "lm_only")]
    LmOnly,
    #[value(name = "multitask")]
    Multitask,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::LmOnly => Variant::LmOnly,
            VariantArg::Multitask => Variant::Multitask,
        }
    }
}

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::LmOnly => "lm_only",
        Variant::Multitask => "multitask",
    }
}

pub fn model_name(variant: Variant, plan: Plan) -> String {
    format!("{}.{}", variant_name(variant), plan.as_str())
}

/// A loaded config: `raw` keeps paths as written (it is what gets hashed),
/// `resolved` has paths made relative to the config's directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub raw: ExperimentConfig,
    pub resolved: ExperimentConfig,
}

impl LoadedConfig {
    /// SHA-256 of the effective configuration (after overrides) serialized
    /// as JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.raw).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {spec:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Usage(format!("override {spec:?} has an empty key segment")));
    }
    // accept any TOML value, falling back to a bare string
    let value = toml::from_str::<toml::Table>(&format!("v = {}", value.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.trim().to_string()));
    Ok((path, value))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override path {} crosses a non-table value", path.join("."))))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    for spec in overrides {
        let (path, value) = parse_override(spec)?;
        apply_override(&mut table, &path, value)?;
    }
    table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("invalid config: {e}")))
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let raw = parse_config(&text, overrides).map_err(|e| e.at(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut resolved = raw.clone();
    resolved.corpus.rdg = resolve(base, &raw.corpus.rdg);
    resolved.corpus.ed = raw.corpus.ed.as_deref().map(|p| resolve(base, p));
    resolved.corpus.labels = raw.corpus.labels.as_deref().map(|p| resolve(base, p));
    validate(&resolved).map_err(|e| e.at(path))?;
    Ok(LoadedConfig { raw, resolved })
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let usage = |m: String| Err(CliError::Usage(m));
    for p in [
        Some(&cfg.corpus.rdg),
        cfg.corpus.ed.as_ref(),
        cfg.corpus.labels.as_ref(),
    ]
    .into_iter()
    .flatten()
    {
        if !p.exists() {
            return usage(format!("referenced path {} does not exist", p.display()));
        }
    }
    if cfg.corpus.ed.is_some() != cfg.corpus.labels.is_some() {
        return usage("corpus.ed and corpus.labels must be given together".into());
    }
    let pr = &cfg.protocol;
    if pr.scenarios_per_split == 0 || pr.samples_per_context == 0 {
        return usage("protocol counts must be positive".into());
    }
    if !(1..=3).contains(&pr.affects) {
        return usage(format!("protocol.affects = {} outside 1..=3", pr.affects));
    }
    if cfg.rating.n_raters == 0 || cfg.rating.noise < 0 {
        return usage("rating.n_raters must be positive and rating.noise non-negative".into());
    }
    if !(cfg.rating.alpha > 0.0 && cfg.rating.alpha < 1.0) {
        return usage(format!("rating.alpha = {} outside (0, 1)", cfg.rating.alpha));
    }
    cfg.decode.validate()?;
    // dimensions are checked with a placeholder vocabulary size
    cfg.model_config(1, Variant::Multitask, Plan::Rdg).validate()?;
    cfg.train_config(Plan::Rdg).validate()?;
    Ok(())
}

impl ExperimentConfig {
    pub fn phases(&self, plan: Plan) -> Vec<PhasePlan> {
        let rdg = PhasePlan {
            corpus: CorpusId::Rdg,
            affect_mode: AffectMode::Regression,
            epochs: None,
        };
        match plan {
            Plan::Rdg => vec![rdg],
            Plan::EdRdg => vec![
                PhasePlan {
                    corpus: CorpusId::Ed,
                    affect_mode: AffectMode::Classification(mtaf::corpus::ED_LABEL_COUNT),
                    epochs: self.train.ed_epochs,
                },
                rdg,
            ],
        }
    }

    pub fn model_config(&self, vocab_size: usize, variant: Variant, plan: Plan) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            d_model: m.d_model,
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            d_ff: m.d_ff,
            vocab_size,
            max_seq_len: m.max_seq_len,
            dropout_rate: m.dropout_rate,
            variant,
            affect_mode: self.phases(plan)[0].affect_mode,
        }
    }

    pub fn train_config(&self, plan: Plan) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            weights: t.weights,
            phases: self.phases(plan),
            grad_clip: t.grad_clip,
            validation_fraction: t.validation_fraction,
            max_steps: t.max_steps,
        }
    }
}
