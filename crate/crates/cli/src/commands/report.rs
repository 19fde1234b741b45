//! `report` command: ranked result tables and a divergence-vs-score scatter
//! chart, written under `reports/`.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use clap::Args;
use domaincraft_core::analysis::{linear_fit, tabulate, RunResult};
use domaincraft_core::strategy::Strategy;

use crate::commands::Ctx;
use crate::svg::{self, Series};
use crate::{results, workspace};

#[derive(Debug, Args)]
pub struct ReportArgs {}

/// Every results row must still have its manifest; a missing one means the
/// store and the workspace have drifted apart.
fn check_manifests(ctx: &Ctx, rows: &[RunResult]) -> Result<()> {
    let mut orphans: Vec<&str> = rows
        .iter()
        .filter(|r| !workspace::manifest_path(&ctx.root, &r.schedule_id).is_file())
        .map(|r| r.schedule_id.as_str())
        .collect();
    orphans.sort();
    orphans.dedup();
    if !orphans.is_empty() {
        bail!(
            "results rows without manifests (deleted or moved?): {}",
            orphans.join(", ")
        );
    }
    Ok(())
}

fn render_tables(rows: &[RunResult]) -> String {
    let mut out = String::new();
    for cell in tabulate(rows) {
        let k = &cell.key;
        let _ = writeln!(
            out,
            "== {} | {}-domain | test {} | im {} | fi {} ==",
            k.metric, k.mode, k.test_domain, k.im_size, k.fi_size
        );
        for (i, row) in cell.rows.iter().enumerate() {
            let marker = match i {
                0 => " [best]",
                1 => " [2nd]",
                _ => "",
            };
            let _ = writeln!(
                out,
                "{:>2}. {:<24} score {:>8.4}  jsd {:.6}{marker}",
                i + 1,
                row.strategy.slug(),
                row.score,
                row.jsd_final_to_test
            );
        }
        if let Some(note) = &cell.annotation {
            let _ = writeln!(out, "    note: {note}");
        }
        let _ = writeln!(out);
    }
    out
}

fn render_scatter(rows: &[RunResult]) -> String {
    let metric = rows.first().map(|r| r.metric.clone()).unwrap_or_default();
    let mut series: Vec<Series> = Vec::new();
    for strategy in Strategy::ALL {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.strategy == strategy)
            .map(|r| (r.jsd_final_to_test, r.score))
            .collect();
        if points.is_empty() {
            continue;
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        series.push(Series {
            label: strategy.slug().to_string(),
            points,
            fit: linear_fit(&xs, &ys).ok(),
        });
    }
    svg::scatter(
        "score vs divergence of final-stage training data",
        "jsd(final-stage train, test)",
        &metric,
        (0.0, 1.0),
        (0.0, 100.0),
        &series,
    )
}

pub fn run(ctx: &Ctx, _args: &ReportArgs) -> Result<()> {
    workspace::require_root(&ctx.root)?;
    let rows = results::read_all(&workspace::results_path(&ctx.root))?;
    if rows.is_empty() {
        bail!("results store is empty; run `train` first");
    }
    check_manifests(ctx, &rows)?;

    let dir = workspace::reports_dir(&ctx.root);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let tables = render_tables(&rows);
    let report_path = dir.join("report.txt");
    std::fs::write(&report_path, &tables)
        .with_context(|| format!("writing {}", report_path.display()))?;
    print!("{tables}");

    let chart = render_scatter(&rows);
    let scatter_path = dir.join("scatter.svg");
    std::fs::write(&scatter_path, chart)
        .with_context(|| format!("writing {}", scatter_path.display()))?;

    println!("wrote {}", report_path.display());
    println!("wrote {}", scatter_path.display());
    Ok(())
}
