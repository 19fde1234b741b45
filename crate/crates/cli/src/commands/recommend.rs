//! `recommend` command: pick a training strategy from data sizes, mode,
//! divergence, and compute budget.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use domaincraft_core::analysis::{recommend, ComputeBudget, Confidence, ModeKind};
use domaincraft_core::corpus::DomainId;

use crate::commands::Ctx;

#[derive(Debug, Args)]
pub struct RecommendArgs {
    /// Training pairs available in the target domain.
    #[arg(long)]
    pub target_size: usize,
    /// Comma-separated training pair counts of the auxiliary domains.
    #[arg(long, default_value = "")]
    pub aux_sizes: String,
    /// Whether the test set is in-domain or out-domain ("in" or "out").
    #[arg(long, default_value = "in")]
    pub mode: String,
    /// Compute budget: "limited" or "ample".
    #[arg(long, default_value = "limited")]
    pub compute: String,
    /// Divergence of each candidate final domain to the test set, as
    /// "domain=value,domain=value".
    #[arg(long)]
    pub jsd: Option<String>,
}

fn parse_aux_sizes(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().with_context(|| format!("auxiliary size {s:?}")))
        .collect()
}

fn parse_jsd(raw: &str) -> Result<BTreeMap<DomainId, f64>> {
    let mut map = BTreeMap::new();
    for part in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (domain, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("expected domain=value, got {part:?}"))?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("divergence value for {domain:?}"))?;
        if map.insert(DomainId::new(domain.trim())?, value).is_some() {
            bail!("domain {domain:?} listed twice in --jsd");
        }
    }
    Ok(map)
}

pub fn run(ctx: &Ctx, args: &RecommendArgs) -> Result<()> {
    let aux_sizes = parse_aux_sizes(&args.aux_sizes)?;
    let mode: ModeKind = args.mode.parse().map_err(|e: String| anyhow!(e))?;
    let compute: ComputeBudget = args.compute.parse().map_err(|e: String| anyhow!(e))?;
    let jsd = args.jsd.as_deref().map(parse_jsd).transpose()?;
    let thresholds = ctx.config.thresholds()?;

    let pick = recommend(
        args.target_size,
        &aux_sizes,
        mode,
        jsd.as_ref(),
        compute,
        &thresholds,
    )?;
    let confidence = match pick.confidence {
        Confidence::Strong => "strong",
        Confidence::Qualified => "qualified",
        Confidence::Degraded => "degraded",
    };
    println!(
        "recommendation: {} (rule {}, confidence {confidence})",
        pick.strategy.slug(),
        pick.rule
    );
    println!("  {}", pick.rationale);
    if let Some(domain) = &pick.final_stage_domain {
        println!("  final stage domain: {domain}");
    }
    for note in &pick.notes {
        println!("  note: {note}");
    }
    Ok(())
}
