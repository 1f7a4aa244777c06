//! `dagvae`: train the graph autoencoder, score its abilities, fine-tune the
//! performance predictor, run latent-space Bayesian optimization, and export
//! latent projections and walks. Exit codes: 0 success, 1 config error,
//! 2 runtime error.

mod commands;
mod config;
mod dataset;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "dagvae", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct CommonArgs {
    /// Experiment configuration (one JSON document).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing). Defaults to the current dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, validate, canonicalize, and dedup a record file.
    Ingest(CommonArgs),
    /// Train the autoencoder and write a checkpoint plus a loss curve.
    Train(CommonArgs),
    /// Reconstruction / validity / uniqueness / novelty / mapping report.
    EvalAbilities(CommonArgs),
    /// Fine-tune the latent performance predictor on labeled graphs.
    FinetunePredict(CommonArgs),
    /// Latent-space Bayesian optimization against a tabular or synthetic
    /// oracle.
    Bo(CommonArgs),
    /// Expand a seed graph by one node and rank the candidates.
    Extrapolate(CommonArgs),
    /// Project latent means onto the first two principal components.
    ProjectLatent(CommonArgs),
    /// Decode equidistant points on a seeded latent great circle.
    CircleWalk(CommonArgs),
}

fn run(args: &CommonArgs, f: impl FnOnce(&ExperimentConfig, &PathBuf) -> Result<(), CliError>) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&args.config, args.seed)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    f(&cfg, &out)
}

fn main() -> ExitCode {
    dagvae_core::util::init_thread_pool();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; everything else is a
            // configuration problem.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => run(a, commands::ingest),
        Command::Train(a) => run(a, commands::train),
        Command::EvalAbilities(a) => run(a, commands::eval_abilities),
        Command::FinetunePredict(a) => run(a, commands::finetune_predict),
        Command::Bo(a) => run(a, commands::bo),
        Command::Extrapolate(a) => run(a, commands::extrapolate),
        Command::ProjectLatent(a) => run(a, commands::project_latent),
        Command::CircleWalk(a) => run(a, commands::circle_walk),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
