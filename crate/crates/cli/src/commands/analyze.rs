//! `analyze` command: per-strategy summary statistics over the results store.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use clap::Args;
use domaincraft_core::analysis::{r_squared, spearman, ModeKind, RunResult};
use domaincraft_core::strategy::Strategy;

use crate::commands::Ctx;
use crate::{results, workspace};

#[derive(Debug, Args)]
pub struct AnalyzeArgs {}

/// Formats a statistic, rendering undefined cases (too few points, constant
/// inputs) as a dash.
fn stat(value: Result<f64, impl std::error::Error>) -> String {
    match value {
        Ok(v) => format!("{v:.4}"),
        Err(_) => "—".to_string(),
    }
}

pub fn run(ctx: &Ctx, _args: &AnalyzeArgs) -> Result<()> {
    workspace::require_root(&ctx.root)?;
    let rows = results::read_all(&workspace::results_path(&ctx.root))?;
    if rows.is_empty() {
        bail!("results store is empty; run `train` first");
    }

    let mut groups: BTreeMap<(String, ModeKind), Vec<&RunResult>> = BTreeMap::new();
    for row in &rows {
        groups
            .entry((row.metric.clone(), row.mode))
            .or_default()
            .push(row);
    }

    for ((metric, mode), group) in &groups {
        println!("== {metric} | {mode}-domain ==");
        println!(
            "{:<24} {:>4} {:>10} {:>10} {:>10}",
            "strategy", "n", "mean", "r2(jsd)", "spearman"
        );
        for strategy in Strategy::ALL {
            let scores: Vec<f64> = group
                .iter()
                .filter(|r| r.strategy == strategy)
                .map(|r| r.score)
                .collect();
            if scores.is_empty() {
                continue;
            }
            let jsds: Vec<f64> = group
                .iter()
                .filter(|r| r.strategy == strategy)
                .map(|r| r.jsd_final_to_test)
                .collect();
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            println!(
                "{:<24} {:>4} {:>10.4} {:>10} {:>10}",
                strategy.slug(),
                scores.len(),
                mean,
                stat(r_squared(&jsds, &scores)),
                stat(spearman(&jsds, &scores)),
            );
        }
        println!();
    }
    Ok(())
}
