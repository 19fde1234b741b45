//! `plan` — compile one strategy into a schedule, print it, and write its
//! manifest with pinned input digests.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Result};
use clap::Args;
use domaincraft_core::corpus::{DomainId, Split};
use domaincraft_core::strategy::{build_schedule, DomainBudget, Mode, Schedule, Strategy};
use sha2::{Digest, Sha256};

use crate::commands::Ctx;
use crate::manifest::{EffectiveSettings, Outputs, RunManifest, TOOLKIT_VERSION};
use crate::workspace;

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Strategy slug: vanilla-ft, multi-domain-ft, single-domain-ittl,
    /// multi-domain-ittl, pretrain-bitext, or pretrain-bitext-mono.
    #[arg(long)]
    pub strategy: String,
    /// Target (final-stage) domain.
    #[arg(long)]
    pub target: String,
    /// in (test on the target) or out (zero-shot on --test).
    #[arg(long)]
    pub mode: String,
    /// Held-out test domain, required with --mode out.
    #[arg(long)]
    pub test: Option<String>,
    /// Pair budget for every auxiliary domain.
    #[arg(long, default_value_t = 0)]
    pub im_size: usize,
    /// Pair budget for the target domain.
    #[arg(long)]
    pub fi_size: usize,
    /// Training domains (comma-separated). Default: every domain in the
    /// workspace, minus the test domain in out mode.
    #[arg(long)]
    pub domains: Option<String>,
    /// Let components sample with replacement when a corpus is smaller than
    /// its budget.
    #[arg(long)]
    pub upsample: bool,
}

/// Builds the budget list: the target gets `fi_size`, every other domain
/// `im_size`.
fn budgets(args: &PlanArgs, domains: &[DomainId], target: &DomainId) -> Result<Vec<DomainBudget>> {
    domains
        .iter()
        .map(|d| {
            let size = if d == target { args.fi_size } else { args.im_size };
            if size == 0 {
                bail!(
                    "domain {d} has a zero budget (set --{} above 0)",
                    if d == target { "fi-size" } else { "im-size" }
                );
            }
            Ok(DomainBudget {
                domain: d.clone(),
                size,
                upsample: args.upsample,
            })
        })
        .collect()
}

/// Digests every corpus file the schedule will read: train splits of all
/// budgeted domains, the test split, and any configured stopword lists.
pub fn input_digests(ctx: &Ctx, schedule: &Schedule) -> Result<BTreeMap<String, String>> {
    let lang = ctx.config.lang()?;
    let mut files: Vec<String> = Vec::new();
    let mut train_domains: Vec<DomainId> = schedule
        .stages
        .iter()
        .flat_map(|s| s.data.components().iter().map(|c| c.domain.clone()))
        .collect();
    train_domains.sort();
    train_domains.dedup();
    for domain in &train_domains {
        files.extend(workspace::split_files(&lang, domain, Split::Train));
    }
    files.extend(workspace::split_files(&lang, &schedule.test.0, schedule.test.1));
    let (src_stop, tgt_stop) = ctx.config.stopword_paths();
    for stop in [src_stop, tgt_stop].into_iter().flatten() {
        files.push(stop.to_string_lossy().into_owned());
    }
    let mut digests = BTreeMap::new();
    for rel in files {
        let path = ctx.root.join(&rel);
        if !path.is_file() {
            bail!("schedule references missing corpus file {rel} (domain not ingested?)");
        }
        digests.insert(rel, workspace::sha256_file(&path)?);
    }
    Ok(digests)
}

/// Checks the budgets against what is actually on disk, so a bad size fails
/// at planning time rather than mid-training.
fn check_sizes(ctx: &Ctx, schedule: &Schedule) -> Result<()> {
    let lang = ctx.config.lang()?;
    for stage in &schedule.stages {
        for c in stage.data.components() {
            let corpus = workspace::load_split(&ctx.root, &lang, &c.domain, Split::Train)?;
            if c.size > corpus.len() && !c.upsample {
                bail!(
                    "domain {} has {} training pairs but the schedule asks for {} (pass --upsample to oversample)",
                    c.domain,
                    corpus.len(),
                    c.size
                );
            }
        }
    }
    Ok(())
}

pub fn effective_settings(ctx: &Ctx) -> Result<EffectiveSettings> {
    let (src_stop, tgt_stop) = ctx.config.stopword_paths();
    ctx.config.side()?; // validate at plan time, store the raw spelling
    let bleu_tokenizer = if ctx.config.subword_bleu()? { "subword" } else { "word" };
    Ok(EffectiveSettings {
        lang: ctx.config.lang()?.to_string(),
        model: ctx.config.model()?,
        train: ctx.config.train()?,
        noise: ctx.config.noise()?,
        bleu_tokenizer: bleu_tokenizer.to_string(),
        divergence_side: ctx.config.raw("divergence.side").to_string(),
        stopwords_source: src_stop.map(|p| p.to_string_lossy().into_owned()),
        stopwords_target: tgt_stop.map(|p| p.to_string_lossy().into_owned()),
    })
}

pub fn config_sha256(ctx: &Ctx) -> String {
    let digest = Sha256::digest(ctx.config.effective().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run(ctx: &Ctx, args: &PlanArgs) -> Result<()> {
    workspace::require_root(&ctx.root)?;
    let lang = ctx.config.lang()?;
    let strategy: Strategy = args.strategy.parse().map_err(|e: String| anyhow!(e))?;
    let target = DomainId::new(&args.target)?;
    let mode = match args.mode.trim().to_lowercase().as_str() {
        "in" | "in-domain" => Mode::InDomain,
        "out" | "out-domain" => Mode::OutDomain {
            test: DomainId::new(
                args.test
                    .as_deref()
                    .ok_or_else(|| anyhow!("--mode out requires --test <domain>"))?,
            )?,
        },
        other => bail!("unknown mode {other:?}: expected in or out"),
    };

    let workspace_domains = workspace::list_domains(&ctx.root, &lang)?;
    let domains: Vec<DomainId> = match &args.domains {
        Some(list) => list
            .split(',')
            .map(|d| DomainId::new(d.trim()).map_err(Into::into))
            .collect::<Result<_>>()?,
        None => {
            let test = match &mode {
                Mode::OutDomain { test } => Some(test.clone()),
                Mode::InDomain => None,
            };
            workspace_domains
                .iter()
                .filter(|d| test.as_ref() != Some(*d))
                .cloned()
                .collect()
        }
    };
    // Vanilla fine-tuning draws from the target alone; every other strategy
    // needs the target plus its auxiliaries in the budget list.
    let domains: Vec<DomainId> = if strategy == Strategy::VanillaFt {
        vec![target.clone()]
    } else if domains.contains(&target) {
        domains
    } else {
        let mut with_target = domains;
        with_target.push(target.clone());
        with_target.sort();
        with_target
    };
    for d in &domains {
        if !workspace_domains.contains(d) {
            bail!("unknown domain {d}: not present under corpora/{}", lang.dir_name());
        }
    }

    let budgets = budgets(args, &domains, &target)?;
    let seed = ctx.config.seed()?;
    let schedule = build_schedule(strategy, &budgets, &target, &mode, seed)?;
    check_sizes(ctx, &schedule)?;

    let manifest = RunManifest {
        version: TOOLKIT_VERSION.to_string(),
        schedule: schedule.clone(),
        base_seed: seed,
        config_sha256: config_sha256(ctx),
        effective: effective_settings(ctx)?,
        corpus_digests: input_digests(ctx, &schedule)?,
        planned_at: crate::manifest::now_utc(),
        trained_at: None,
        outputs: Outputs::default(),
    };
    let path = workspace::manifest_path(&ctx.root, &schedule.id);
    manifest.save(&path)?;

    println!("schedule {}", schedule.id);
    println!(
        "  strategy {} | mode {} | target {} | test {}/{}",
        schedule.strategy, schedule.mode.slug(), schedule.target, schedule.test.0, schedule.test.1
    );
    for (i, stage) in schedule.stages.iter().enumerate() {
        let data = stage
            .data
            .components()
            .iter()
            .map(|c| {
                format!(
                    "{}@{}{}",
                    c.domain,
                    c.size,
                    if c.upsample { " (upsampled)" } else { "" }
                )
            })
            .collect::<Vec<_>>()
            .join(" + ");
        println!(
            "  stage {}: {} on {data} (mix seed {})",
            i + 1,
            stage.objective.slug(),
            stage.data.seed
        );
    }
    println!("manifest {}", path.display());
    Ok(())
}
