//! One module per subcommand; each exposes a clap `Args` struct and a
//! `run(ctx, args)` entry point.

use std::path::PathBuf;

use crate::config::Config;

pub mod analyze;
pub mod divergence;
pub mod evaluate;
pub mod ingest;
pub mod plan;
pub mod recommend;
pub mod report;
pub mod synth;
pub mod train;

/// Shared command context: the resolved workspace root and configuration.
pub struct Ctx {
    pub root: PathBuf,
    pub config: Config,
}
