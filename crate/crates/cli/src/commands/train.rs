use std::fs;
use std::path::{Path, PathBuf};

use mtaf::model::{init, Variant};
use mtaf::trainer::{save_checkpoint, train, Corpora};

use super::ConfigArgs;
use crate::config::{model_name, LoadedConfig, Plan, VariantArg};
use crate::data::{data_inputs, load_data, load_vocab, write_json, TrainInfo, CHECKPOINT_FILE, TRAIN_INFO_FILE};
use crate::error::{CliError, Result};
use crate::manifest::{sha256_file, Manifest};

pub const LOCK_FILE: &str = "train.lock";

#[derive(Debug, Clone, clap::Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Checkpoint directory; owned exclusively for the duration of the run.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "multitask")]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value = "rdg")]
    pub plan: Plan,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// Exclusive claim on a checkpoint directory, released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Data(format!(
                "{} is locked by another train run (remove {} if that run is dead)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let extra = super::flag_overrides(&[
        ("train.seed", args.seed.map(|v| v.to_string())),
        ("train.epochs", args.epochs.map(|v| v.to_string())),
    ]);
    let cfg = args.config.load(&extra)?;
    train_model(&cfg, &args.vocab, &args.out, args.variant.into(), args.plan)
}

pub fn train_model(cfg: &LoadedConfig, vocab_path: &Path, out: &Path, variant: Variant, plan: Plan) -> Result<()> {
    let _lock = DirLock::acquire(out)?;
    let c = &cfg.resolved;
    let vocab = load_vocab(vocab_path)?;
    let data = load_data(c)?;
    let max_len = c.model.max_seq_len;
    let ed = match plan {
        Plan::Rdg => None,
        Plan::EdRdg => Some(
            data.ed_train(&vocab, max_len)?
                .ok_or_else(|| CliError::Usage("plan ed-rdg needs corpus.ed and corpus.labels in the config".into()))?,
        ),
    };
    let corpora = Corpora {
        rdg: Some(data.rdg_train(&vocab, max_len)?),
        ed,
    };
    let model_cfg = c.model_config(vocab.len(), variant, plan);
    let train_cfg = c.train_config(plan);
    let name = model_name(variant, plan);
    eprintln!(
        "training {name} ({} rdg examples)",
        corpora.rdg.as_ref().map_or(0, Vec::len)
    );
    let params = init::<f32>(&model_cfg, c.train.seed)?;
    let (ckpt, log) = train(&corpora, params, &train_cfg, &vocab)?;

    let ckpt_path = out.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &ckpt_path).map_err(|e| CliError::from(e).at(&ckpt_path))?;
    let info_path = out.join(TRAIN_INFO_FILE);
    write_json(
        &info_path,
        &TrainInfo {
            model: name,
            variant,
            plan,
            vocab_sha256: sha256_file(vocab_path)?,
            checkpoint_sha256: ckpt.hash(),
            log,
        },
    )?;
    let mut inputs = data_inputs(c);
    inputs.push(vocab_path.to_path_buf());
    let ins: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut m = Manifest::new("train").with_config(cfg);
    m.seed("train", c.train.seed)
        .seed("split", c.corpus.split_seed)
        .param("variant", variant)
        .param("plan", plan);
    m.write(out, &ins, &[&ckpt_path, &info_path])?;
    Ok(())
}
