use std::fs;
use std::path::{Path, PathBuf};

use mtaf::model::Variant;

use super::ConfigArgs;
use crate::config::{model_name, Plan, VariantArg};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, clap::Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory for every artifact of the run.
    #[arg(long)]
    pub out: PathBuf,
    /// Variants to train; defaults to both.
    #[arg(long, value_enum, num_args = 1..)]
    pub variants: Vec<VariantArg>,
    /// Phase plans to train; defaults to both.
    #[arg(long, value_enum, num_args = 1..)]
    pub plans: Vec<Plan>,
    /// Inject a constant-answer rater into the simulated crowd.
    #[arg(long)]
    pub constant_rater: Option<String>,
}

/// Runs the full protocol over the variant x plan grid:
/// fit-vocab, then train, generate and score per model, then
/// simulate-raters, flag-raters, aggregate and analyze.
pub fn run(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.config.load(&[])?;
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let variants: Vec<Variant> = if args.variants.is_empty() {
        vec![Variant::LmOnly, Variant::Multitask]
    } else {
        args.variants.iter().map(|&v| v.into()).collect()
    };
    let plans: Vec<Plan> = if args.plans.is_empty() {
        Plan::ALL.to_vec()
    } else {
        args.plans.clone()
    };

    let vocab = out.join("vocab.txt");
    super::prepare::fit_vocab_with(&cfg, &vocab)?;
    let mut generations = Vec::new();
    let mut metrics = Vec::new();
    for &variant in &variants {
        for &plan in &plans {
            let dir = out.join("models").join(model_name(variant, plan));
            super::train::train_model(&cfg, &vocab, &dir, variant, plan)?;
            let gen = dir.join("generations.jsonl");
            super::generate::generate_records(&cfg, &vocab, &dir, &gen)?;
            let met = dir.join("metrics.jsonl");
            super::score::score(&cfg, &gen, Some((&dir, &vocab)), &met)?;
            generations.push(gen);
            metrics.push(met);
        }
    }
    let gens: Vec<&Path> = generations.iter().map(PathBuf::as_path).collect();
    let mets: Vec<&Path> = metrics.iter().map(PathBuf::as_path).collect();
    let ratings = out.join("ratings.jsonl");
    super::rating::simulate_with(&cfg, &gens, &mets, args.constant_rater.as_deref(), &ratings)?;
    let flagged = out.join("flagged_raters.txt");
    super::rating::flag(&super::rating::FlagArgs {
        ratings: ratings.clone(),
        out: flagged.clone(),
        min_tasks: cfg.resolved.rating.min_tasks,
    })?;
    let aggregated = out.join("aggregated.jsonl");
    super::rating::aggregate(&super::rating::AggregateArgs {
        ratings: ratings.clone(),
        exclude: Some(flagged.clone()),
        out: aggregated.clone(),
    })?;
    let analysis = out.join("analysis.json");
    super::analyze::analyze_files(&gens, &mets, &aggregated, cfg.resolved.rating.alpha, &analysis)?;

    let mut outputs: Vec<&Path> = vec![&vocab];
    outputs.extend(&gens);
    outputs.extend(&mets);
    outputs.extend([ratings.as_path(), &flagged, &aggregated, &analysis]);
    let mut m = Manifest::new("experiment").with_config(&cfg);
    m.seed("train", cfg.resolved.train.seed)
        .seed("decode", cfg.resolved.decode.seed)
        .seed("rating", cfg.resolved.rating.seed)
        .seed("split", cfg.resolved.corpus.split_seed)
        .param("constant_rater", &args.constant_rater);
    let inputs = crate::data::data_inputs(&cfg.resolved);
    let ins: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    m.write(out, &ins, &outputs)?;
    eprintln!("experiment complete: {}", out.display());
    Ok(())
}
