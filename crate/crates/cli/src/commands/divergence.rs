//! `divergence` — pairwise divergence matrix over the workspace's domains,
//! written as CSV and a heatmap SVG.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use clap::Args;
use domaincraft_core::corpus::Split;
use domaincraft_core::divergence::divergence_matrix;

use crate::commands::Ctx;
use crate::svg;
use crate::workspace;

#[derive(Debug, Args)]
pub struct DivergenceArgs {
    /// Split to compare across domains.
    #[arg(long, default_value = "train")]
    pub split: String,
}

pub fn run(ctx: &Ctx, args: &DivergenceArgs) -> Result<()> {
    workspace::require_root(&ctx.root)?;
    let lang = ctx.config.lang()?;
    let side = ctx.config.side()?;
    let stopwords = workspace::stopwords(&ctx.root, &ctx.config)?;
    let split: Split = args.split.parse()?;

    let domains = workspace::list_domains(&ctx.root, &lang)?;
    if domains.len() < 2 {
        bail!(
            "divergence needs at least two domains under corpora/{}, found {}",
            lang.dir_name(),
            domains.len()
        );
    }
    let corpora = domains
        .iter()
        .map(|d| workspace::load_split(&ctx.root, &lang, d, split))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = corpora.iter().collect();
    let matrix = divergence_matrix(&refs, side, &stopwords)?;

    let labels: Vec<String> = matrix.labels.iter().map(|(d, _)| d.to_string()).collect();
    let mut csv = String::from("domain");
    for label in &labels {
        let _ = write!(csv, ",{label}");
    }
    csv.push('\n');
    for (i, label) in labels.iter().enumerate() {
        let _ = write!(csv, "{label}");
        for j in 0..labels.len() {
            let _ = write!(csv, ",{:.6}", matrix.get(i, j));
        }
        csv.push('\n');
    }
    let dir = workspace::divergence_dir(&ctx.root);
    std::fs::create_dir_all(&dir)?;
    let csv_path = dir.join("matrix.csv");
    std::fs::write(&csv_path, &csv).with_context(|| format!("writing {}", csv_path.display()))?;
    let svg_path = dir.join("matrix.svg");
    let title = format!("token divergence, {split} split");
    std::fs::write(&svg_path, svg::heatmap(&title, &labels, &matrix.values))
        .with_context(|| format!("writing {}", svg_path.display()))?;

    // Aligned text view for the terminal.
    let width = labels.iter().map(|l| l.len()).max().unwrap_or(6).max(6);
    print!("{:width$}", "");
    for label in &labels {
        print!("  {label:>width$}");
    }
    println!();
    for (i, label) in labels.iter().enumerate() {
        print!("{label:>width$}");
        for j in 0..labels.len() {
            print!("  {:>width$.4}", matrix.get(i, j));
        }
        println!();
    }
    println!("wrote {} and {}", csv_path.display(), svg_path.display());
    Ok(())
}
