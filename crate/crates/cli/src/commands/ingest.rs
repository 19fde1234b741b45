//! `ingest` — create the workspace and import aligned corpora into it.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use domaincraft_core::corpus::{self, DomainId, Split};

use crate::commands::Ctx;
use crate::config::{template, CONFIG_FILE};
use crate::workspace;

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Domain id the imported corpus belongs to.
    #[arg(long, requires = "input")]
    pub domain: Option<String>,
    /// Which split the files hold: train, dev, or test.
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Source-side text file, one sentence per line (with --tgt).
    #[arg(long, requires = "tgt", group = "input")]
    pub src: Option<PathBuf>,
    /// Target-side text file, aligned line-by-line with --src.
    #[arg(long, requires = "src")]
    pub tgt: Option<PathBuf>,
    /// Tab-separated source<TAB>target file (alternative to --src/--tgt).
    #[arg(long, conflicts_with = "src", group = "input")]
    pub tsv: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, args: &IngestArgs) -> Result<()> {
    workspace::ensure_layout(&ctx.root)?;
    let config_path = ctx.root.join(CONFIG_FILE);
    if !config_path.exists() {
        std::fs::write(&config_path, template())
            .with_context(|| format!("writing {}", config_path.display()))?;
        println!("initialized workspace {} (wrote {CONFIG_FILE})", ctx.root.display());
    } else {
        println!("workspace {}", ctx.root.display());
    }

    let Some(domain) = &args.domain else {
        // Bare `ingest` just initializes the workspace.
        return Ok(());
    };
    let domain = DomainId::new(domain)?;
    let split: Split = args.split.parse()?;
    let lang = ctx.config.lang()?;

    let report = match (&args.src, &args.tgt, &args.tsv) {
        (Some(src), Some(tgt), None) => {
            corpus::load_parallel(src, tgt, domain.clone(), lang.clone(), split)?
        }
        (None, None, Some(tsv)) => corpus::load_tsv(tsv, domain.clone(), lang.clone(), split)?,
        _ => bail!("ingest needs either --src and --tgt, or --tsv"),
    };
    let stem = corpus::domain_dir(&ctx.root, &lang, &domain).join(split.as_str());
    report.corpus.save(&stem)?;
    println!(
        "ingested {domain}/{split}: {} pairs ({} dropped)",
        report.corpus.len(),
        report.dropped
    );
    Ok(())
}
