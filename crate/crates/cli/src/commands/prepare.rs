use std::fs;
use std::path::{Path, PathBuf};

use mtaf::corpus::{write_ed, write_label_manifest, write_rdg};
use mtaf::synthetic::{synthetic_ed, synthetic_rdg, SyntheticConfig};
use mtaf::tokenizer::Vocab;

use super::ConfigArgs;
use crate::config::LoadedConfig;
use crate::data::{create, data_inputs, load_data};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, clap::Args)]
pub struct MakeSyntheticArgs {
    /// Output directory for rdg.jsonl, ed.jsonl and labels.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 12)]
    pub scenarios: usize,
    /// Human utterances per scenario and affect target.
    #[arg(long, default_value_t = 4)]
    pub per_affect: usize,
    #[arg(long, default_value_t = 96)]
    pub conversations: usize,
    /// Standard deviation of the simulated rating noise on affect scores.
    #[arg(long, default_value_t = 0.5)]
    pub affect_noise: f64,
}

pub fn make_synthetic(args: &MakeSyntheticArgs) -> Result<()> {
    if args.scenarios == 0 || args.per_affect == 0 || args.conversations == 0 {
        return Err(CliError::Usage("synthetic corpus counts must be positive".into()));
    }
    if !(args.affect_noise >= 0.0 && args.affect_noise.is_finite()) {
        return Err(CliError::Usage("affect noise must be a non-negative number".into()));
    }
    let cfg = SyntheticConfig {
        n_scenarios: args.scenarios,
        utterances_per_affect: [args.per_affect; 3],
        affect_noise: args.affect_noise,
        n_conversations: args.conversations,
        n_labels: mtaf::corpus::ED_LABEL_COUNT,
        seed: args.seed,
    };
    let rdg = synthetic_rdg(&cfg)?;
    let ed = synthetic_ed(&cfg)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let paths = [
        args.out.join("rdg.jsonl"),
        args.out.join("ed.jsonl"),
        args.out.join("labels.txt"),
    ];
    write_rdg(&rdg, create(&paths[0])?)?;
    write_ed(&ed, create(&paths[1])?)?;
    write_label_manifest(&ed.labels, create(&paths[2])?)?;
    let mut m = Manifest::new("make-synthetic");
    m.seed("synthetic", args.seed).param("synthetic", &cfg);
    let outs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    m.write(&args.out, &[], &outs)?;
    eprintln!(
        "wrote {} scenarios, {} utterances, {} conversations to {}",
        rdg.scenarios().len(),
        rdg.utterances().len(),
        ed.conversations.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, clap::Args)]
pub struct FitVocabArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Vocabulary file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_vocab: Option<usize>,
}

pub fn fit_vocab(args: &FitVocabArgs) -> Result<()> {
    let extra = super::flag_overrides(&[("tokenizer.max_vocab", args.max_vocab.map(|v| v.to_string()))]);
    fit_vocab_with(&args.config.load(&extra)?, &args.out)
}

pub fn fit_vocab_with(cfg: &LoadedConfig, out: &Path) -> Result<()> {
    let c = &cfg.resolved;
    let data = load_data(c)?;
    let vocab = Vocab::fit(data.vocab_texts(), c.tokenizer.max_vocab)?;
    create(out)?;
    vocab.save(out).map_err(|e| CliError::from(e).at(out))?;
    let inputs = data_inputs(c);
    let ins: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut m = Manifest::new("fit-vocab").with_config(cfg);
    m.seed("split", c.corpus.split_seed).param("vocab_size", vocab.len());
    m.write(out, &ins, &[out])?;
    eprintln!("vocabulary of {} types written to {}", vocab.len(), out.display());
    Ok(())
}
