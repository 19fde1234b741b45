//! Command-line interface for planning, training, and analyzing
//! domain-adaptation experiments on a file-based workspace.

mod commands;
mod config;
mod manifest;
mod results;
mod svg;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "domaincraft", version, about = "Domain-adaptation experiment toolkit")]
struct Cli {
    /// Workspace root (default: $DOMAINCRAFT_WORKSPACE, then ./workspace).
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    /// Base seed, overriding the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Configuration override as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Initialize a workspace or load a parallel corpus into it.
    Ingest(commands::ingest::IngestArgs),
    /// Generate synthetic domains with controllable divergence.
    Synth(commands::synth::SynthArgs),
    /// Pairwise divergence matrix across ingested domains.
    Divergence(commands::divergence::DivergenceArgs),
    /// Compile a training schedule and pin it in a manifest.
    Plan(commands::plan::PlanArgs),
    /// Execute a planned schedule and record its result.
    Train(commands::train::TrainArgs),
    /// Re-score a trained schedule from its checkpoint.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Per-strategy summary statistics over recorded results.
    Analyze(commands::analyze::AnalyzeArgs),
    /// Strategy recommendation from sizes, mode, divergence, and compute.
    Recommend(commands::recommend::RecommendArgs),
    /// Ranked tables and scatter chart from recorded results.
    Report(commands::report::ReportArgs),
}

fn run(cli: Cli) -> Result<()> {
    let root = workspace::resolve_root(cli.workspace);
    let config = Config::load(&root, &cli.set, cli.seed)?;
    let ctx = Ctx { root, config };
    match &cli.command {
        Command::Ingest(args) => commands::ingest::run(&ctx, args),
        Command::Synth(args) => commands::synth::run(&ctx, args),
        Command::Divergence(args) => commands::divergence::run(&ctx, args),
        Command::Plan(args) => commands::plan::run(&ctx, args),
        Command::Train(args) => commands::train::run(&ctx, args),
        Command::Evaluate(args) => commands::evaluate::run(&ctx, args),
        Command::Analyze(args) => commands::analyze::run(&ctx, args),
        Command::Recommend(args) => commands::recommend::run(&ctx, args),
        Command::Report(args) => commands::report::run(&ctx, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", format!("{err:#}").replace('\n', "; "));
            ExitCode::FAILURE
        }
    }
}
