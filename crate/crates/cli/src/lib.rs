//! Command-line driver: corpus preparation, training, generation, scoring,
//! rating simulation and aggregation, and statistical analysis.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod manifest;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

use commands::{analyze, experiment, generate, prepare, rating, score, train};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mtaf", version, about = "Affect-aware dialogue generation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic RDG-style corpus, ED-style corpus and label manifest.
    MakeSynthetic(prepare::MakeSyntheticArgs),
    /// Fit the word vocabulary.
    FitVocab(prepare::FitVocabArgs),
    /// Train one model into a checkpoint directory.
    Train(train::TrainArgs),
    /// Generate the evaluation protocol's utterances for one model.
    Generate(generate::GenerateArgs),
    /// BLEU against same-cell human references, plus perplexity.
    Score(score::ScoreArgs),
    /// Simulate a crowd rating the generated utterances.
    SimulateRaters(rating::SimulateArgs),
    /// List raters who give the same answer to everything.
    FlagRaters(rating::FlagArgs),
    /// Aggregate ratings into per-utterance means and a deficit list.
    Aggregate(rating::AggregateArgs),
    /// ANOVA, Tukey HSD and BLEU correlation over the results table.
    Analyze(analyze::AnalyzeArgs),
    /// Run the whole protocol over the variant x plan grid.
    Experiment(experiment::ExperimentArgs),
}

pub fn dispatch(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::MakeSynthetic(a) => prepare::make_synthetic(a),
        Command::FitVocab(a) => prepare::fit_vocab(a),
        Command::Train(a) => train::run(a),
        Command::Generate(a) => generate::run(a),
        Command::Score(a) => score::run(a),
        Command::SimulateRaters(a) => rating::simulate(a),
        Command::FlagRaters(a) => rating::flag(a).map(|_| ()),
        Command::Aggregate(a) => rating::aggregate(a),
        Command::Analyze(a) => analyze::run(a).map(|_| ()),
        Command::Experiment(a) => experiment::run(a),
    }
}

/// Parses `args` and runs the command, returning the process exit status:
/// 0 success, 1 usage error, 2 data error, 3 numeric failure.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
