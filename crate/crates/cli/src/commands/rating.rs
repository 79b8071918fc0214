use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mtaf::evalpipe::{
    aggregate as aggregate_records, build_tasks, constant_rater, flag_unreliable, read_ratings, simulate_raters,
    write_aggregation_report, write_ratings, NoiseModel, RatingRecord, ReliabilityPolicy, Stage,
};
use mtaf::metrics::UtteranceMetrics;
use mtaf::synthetic::heuristic_truth;

use super::ConfigArgs;
use crate::config::LoadedConfig;
use crate::data::{create, read_jsonl, GenerationRecord};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, clap::Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Generation files; repeatable.
    #[arg(long, required = true, num_args = 1..)]
    pub generations: Vec<PathBuf>,
    /// Metric files from `score`, covering every generated utterance.
    #[arg(long, required = true, num_args = 1..)]
    pub metrics: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Adds a rater who gives the same answers to everything, ahead of the
    /// simulated crowd.
    #[arg(long)]
    pub constant_rater: Option<String>,
    #[arg(long)]
    pub raters: Option<usize>,
    #[arg(long)]
    pub noise: Option<i32>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let extra = super::flag_overrides(&[
        ("rating.n_raters", args.raters.map(|v| v.to_string())),
        ("rating.noise", args.noise.map(|v| v.to_string())),
        ("rating.seed", args.seed.map(|v| v.to_string())),
    ]);
    let cfg = args.config.load(&extra)?;
    let gens: Vec<&Path> = args.generations.iter().map(PathBuf::as_path).collect();
    let mets: Vec<&Path> = args.metrics.iter().map(PathBuf::as_path).collect();
    simulate_with(&cfg, &gens, &mets, args.constant_rater.as_deref(), &args.out)
}

/// Latent truths come from [`heuristic_truth`]: BLEU drives typicality, the
/// affect lexicon drives affect and offensiveness.
pub fn simulate_with(
    cfg: &LoadedConfig,
    generations: &[&Path],
    metrics: &[&Path],
    constant: Option<&str>,
    out: &Path,
) -> Result<()> {
    let r = &cfg.resolved.rating;
    let mut bleu: BTreeMap<String, f64> = BTreeMap::new();
    for p in metrics {
        for m in read_jsonl::<UtteranceMetrics>(p)? {
            bleu.insert(m.utterance_id, m.bleu);
        }
    }
    let mut truths = Vec::new();
    let mut seen = BTreeSet::new();
    for p in generations {
        for g in read_jsonl::<GenerationRecord>(p)? {
            if !seen.insert(g.id.clone()) {
                return Err(CliError::Data(format!(
                    "{}: duplicate utterance id {}",
                    p.display(),
                    g.id
                )));
            }
            let b = *bleu
                .get(&g.id)
                .ok_or_else(|| CliError::Data(format!("no metric record for {}", g.id)))?;
            truths.push(heuristic_truth(&g.id, &g.text, b));
        }
    }
    let mut records = Vec::new();
    if let Some(id) = constant {
        if id.starts_with("sim-") {
            return Err(CliError::Usage(format!("rater id {id} collides with simulated raters")));
        }
        let ids: Vec<String> = truths.iter().map(|t| t.utterance_id.clone()).collect();
        for stage in [Stage::One, Stage::Two] {
            records.extend(constant_rater(id, &build_tasks(&ids, stage)));
        }
    }
    records.extend(simulate_raters(
        &truths,
        NoiseModel { max_offset: r.noise },
        r.n_raters,
        r.seed,
    ));
    write_ratings(&records, BufWriter::new(create(out)?))?;
    let mut m = Manifest::new("simulate-raters").with_config(cfg);
    m.seed("rating", r.seed)
        .param("constant_rater", constant)
        .param("records", records.len());
    let ins: Vec<&Path> = generations.iter().chain(metrics).copied().collect();
    m.write(out, &ins, &[out])?;
    eprintln!("{} rating records for {} utterances", records.len(), truths.len());
    Ok(())
}

pub fn read_ratings_file(path: &Path) -> Result<Vec<RatingRecord>> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_ratings(BufReader::new(f)).map_err(|e| CliError::from(e).at(path))
}

#[derive(Debug, Clone, clap::Args)]
pub struct FlagArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    /// Flagged rater ids, one per line.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub min_tasks: usize,
}

pub fn flag(args: &FlagArgs) -> Result<BTreeSet<String>> {
    if args.min_tasks < 2 {
        return Err(CliError::Usage("--min-tasks must be at least 2".into()));
    }
    let records = read_ratings_file(&args.ratings)?;
    let policy = ReliabilityPolicy {
        min_tasks: args.min_tasks,
        ..ReliabilityPolicy::default()
    };
    let flagged = flag_unreliable(&records, &policy);
    let mut w = BufWriter::new(create(&args.out)?);
    for id in &flagged {
        writeln!(w, "{id}").map_err(|e| CliError::io(&args.out, e))?;
    }
    w.flush().map_err(|e| CliError::io(&args.out, e))?;
    let mut m = Manifest::new("flag-raters");
    m.param("min_tasks", args.min_tasks).param("flagged", flagged.len());
    m.write(&args.out, &[&args.ratings], &[&args.out])?;
    eprintln!("{} rater(s) flagged", flagged.len());
    Ok(flagged)
}

#[derive(Debug, Clone, clap::Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    /// Rater ids to exclude, one per line (as written by `flag-raters`).
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn aggregate(args: &AggregateArgs) -> Result<()> {
    let records = read_ratings_file(&args.ratings)?;
    let mut exclusions = BTreeSet::new();
    if let Some(p) = &args.exclude {
        let f = std::fs::File::open(p).map_err(|e| CliError::io(p, e))?;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| CliError::io(p, e))?;
            if !line.trim().is_empty() {
                exclusions.insert(line.trim().to_string());
            }
        }
    }
    let agg = aggregate_records(&records, &exclusions);
    let mut w = BufWriter::new(create(&args.out)?);
    write_aggregation_report(&agg, &mut w)?;
    w.flush().map_err(|e| CliError::io(&args.out, e))?;
    let mut m = Manifest::new("aggregate");
    m.param("excluded", &exclusions)
        .param("aggregated", agg.ratings.len())
        .param("deficit_utterances", agg.deficit_ids().len());
    let mut ins = vec![args.ratings.as_path()];
    ins.extend(args.exclude.as_deref());
    m.write(&args.out, &ins, &[&args.out])?;
    eprintln!(
        "{} utterances aggregated, {} on the deficit list",
        agg.ratings.len(),
        agg.deficit_ids().len()
    );
    Ok(())
}
