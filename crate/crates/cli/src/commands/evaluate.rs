//! `evaluate` command: re-score a trained schedule from its saved checkpoint
//! and cross-check the stored result.

use anyhow::{bail, Context, Result};
use clap::Args;
use domaincraft_core::eval::evaluate;
use domaincraft_core::model::{checkpoint, SubwordModel};

use crate::commands::Ctx;
use crate::manifest::RunManifest;
use crate::{results, workspace};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Schedule id produced by `plan` and executed by `train`.
    pub schedule: String,
}

pub fn run(ctx: &Ctx, args: &EvaluateArgs) -> Result<()> {
    workspace::require_root(&ctx.root)?;
    let manifest = RunManifest::load(&workspace::manifest_path(&ctx.root, &args.schedule))?;
    let outputs = &manifest.outputs;
    let (Some(subword_rel), Some(final_ckpt)) = (&outputs.subword, outputs.checkpoints.last())
    else {
        bail!("schedule {} is not trained yet; run `train` first", args.schedule);
    };

    let subword_json = std::fs::read_to_string(ctx.root.join(subword_rel))
        .with_context(|| format!("reading {subword_rel}"))?;
    let subword: SubwordModel =
        serde_json::from_str(&subword_json).with_context(|| format!("parsing {subword_rel}"))?;
    let params = checkpoint::load(&ctx.root.join(final_ckpt))?;

    let eff = &manifest.effective;
    let lang = eff.lang_pair()?;
    let schedule = &manifest.schedule;
    let test = workspace::load_split(&ctx.root, &lang, &schedule.test.0, schedule.test.1)?;
    let eval = evaluate(&params, &subword, &schedule.id, &test, eff.tokenizer(&subword)?)?;
    println!("schedule {}: {} = {:.4}", schedule.id, eval.metric, eval.score);

    let stored = results::read_all(&workspace::results_path(&ctx.root))?;
    match stored.iter().find(|r| r.schedule_id == schedule.id) {
        Some(row) => {
            if format!("{:.4}", row.score) != format!("{:.4}", eval.score) {
                bail!(
                    "recomputed score {:.4} disagrees with the stored result {:.4}",
                    eval.score,
                    row.score
                );
            }
            println!("matches the stored result");
        }
        None => println!("note: no stored result row for this schedule"),
    }
    Ok(())
}
