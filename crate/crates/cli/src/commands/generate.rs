use std::path::{Path, PathBuf};

use mtaf::corpus::rdg_context;
use mtaf::generator::{generate, strip_eos, DecodeConfig};
use mtaf::trainer::load_checkpoint;

use super::ConfigArgs;
use crate::config::LoadedConfig;
use crate::data::{
    load_data, load_vocab, read_json, write_jsonl, GenerationRecord, TrainInfo, CHECKPOINT_FILE, TRAIN_INFO_FILE,
};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, clap::Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Model directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
}

pub fn run(args: &GenerateArgs) -> Result<()> {
    let extra = super::flag_overrides(&[
        ("decode.seed", args.seed.map(|v| v.to_string())),
        ("protocol.samples_per_context", args.samples.map(|v| v.to_string())),
    ]);
    let cfg = args.config.load(&extra)?;
    generate_records(&cfg, &args.vocab, &args.model, &args.out).map(|_| ())
}

/// Protocol: every evaluation scenario (seen, then unseen) times every
/// affect target times `samples_per_context` samples. Sample `i` of the run
/// decodes with seed `decode.seed + i`.
pub fn generate_records(
    cfg: &LoadedConfig,
    vocab_path: &Path,
    model_dir: &Path,
    out: &Path,
) -> Result<Vec<GenerationRecord>> {
    let c = &cfg.resolved;
    let vocab = load_vocab(vocab_path)?;
    let ckpt_path = model_dir.join(CHECKPOINT_FILE);
    let info_path = model_dir.join(TRAIN_INFO_FILE);
    let ckpt = load_checkpoint(&ckpt_path).map_err(|e| CliError::from(e).at(&ckpt_path))?;
    ckpt.check_vocab(&vocab).map_err(|e| CliError::from(e).at(&ckpt_path))?;
    let info: TrainInfo = read_json(&info_path)?;
    let data = load_data(c)?;

    let mut records = Vec::new();
    let scenarios = data
        .split
        .test_seen
        .iter()
        .map(|s| (s, "seen"))
        .chain(data.split.test_unseen.iter().map(|s| (s, "unseen")));
    for (sid, split) in scenarios {
        let scenario = data.rdg.scenario(sid).expect("split ids come from the corpus");
        for &affect in c.protocol.affect_targets() {
            let context = rdg_context(&scenario.description, affect, &vocab);
            for sample in 0..c.protocol.samples_per_context {
                let seed = c.decode.seed.wrapping_add(records.len() as u64);
                let dc = DecodeConfig { seed, ..c.decode };
                let ids =
                    generate(&ckpt.params, &vocab, &context, &dc).map_err(|e| CliError::from(e).at(&ckpt_path))?;
                let text = vocab.decode(&strip_eos(&ids, &vocab))?;
                records.push(GenerationRecord {
                    id: format!("{}/{sid}/{affect}/{sample}", info.model),
                    model: info.model.clone(),
                    variant: info.variant,
                    plan: info.plan,
                    scenario_id: sid.clone(),
                    split: split.into(),
                    affect,
                    sample,
                    seed,
                    text,
                });
            }
        }
    }
    write_jsonl(out, &records)?;
    let mut inputs = crate::data::data_inputs(c);
    inputs.extend([vocab_path.to_path_buf(), ckpt_path, info_path]);
    let ins: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut m = Manifest::new("generate").with_config(cfg);
    m.seed("decode", c.decode.seed)
        .seed("split", c.corpus.split_seed)
        .param("model", &info.model)
        .param("records", records.len());
    m.write(out, &ins, &[out])?;
    eprintln!("{}: {} generation records", info.model, records.len());
    Ok(records)
}
