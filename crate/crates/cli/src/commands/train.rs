//! `train` command: execute a planned schedule exactly as its manifest
//! records it — pinned settings, verified inputs, deterministic outputs.

use std::collections::BTreeMap;
use std::fs;

use anyhow::{bail, Context, Result};
use clap::Args;
use domaincraft_core::analysis::{ModeKind, RunResult};
use domaincraft_core::corpus::{DomainId, ParallelCorpus, Split};
use domaincraft_core::divergence::corpus_jsd;
use domaincraft_core::eval::evaluate;
use domaincraft_core::mixing::{mix, MixedDataset};
use domaincraft_core::model::{checkpoint, train_bpe, train_stage, ModelParams};

use crate::commands::{plan, Ctx};
use crate::manifest::{now_utc, Outputs, RunManifest};
use crate::{results, workspace};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Schedule id produced by `plan`.
    pub schedule: String,
}

/// Confirms every input file still matches the digest pinned at plan time.
fn verify_digests(ctx: &Ctx, manifest: &RunManifest) -> Result<()> {
    for (rel, expected) in &manifest.corpus_digests {
        let path = ctx.root.join(rel);
        if !path.is_file() {
            bail!("input file {rel} from the manifest is missing; re-run `plan`");
        }
        let actual = workspace::sha256_file(&path)?;
        if &actual != expected {
            bail!(
                "input file {rel} changed since planning (expected sha256 {expected}, found {actual}); re-run `plan`"
            );
        }
    }
    Ok(())
}

/// The final-stage training mixture as a corpus, for divergence against the
/// test set.
fn mixture_corpus(mixed: &MixedDataset, manifest: &RunManifest) -> Result<ParallelCorpus> {
    let lines = mixed
        .pairs()
        .iter()
        .map(|(pair, _)| (pair.source.clone(), pair.target.clone()));
    let report = ParallelCorpus::from_lines(
        DomainId::new("final-stage")?,
        manifest.effective.lang_pair()?,
        Split::Train,
        lines,
    )?;
    Ok(report.corpus)
}

pub fn run(ctx: &Ctx, args: &TrainArgs) -> Result<()> {
    workspace::require_root(&ctx.root)?;
    let path = workspace::manifest_path(&ctx.root, &args.schedule);
    let mut manifest = RunManifest::load(&path)?;
    verify_digests(ctx, &manifest)?;
    if plan::config_sha256(ctx) != manifest.config_sha256 {
        eprintln!(
            "note: current configuration differs from the one recorded at plan time; \
             training with the manifest's pinned settings"
        );
    }

    let eff = manifest.effective.clone();
    let lang = eff.lang_pair()?;
    let schedule = manifest.schedule.clone();

    // Training corpora for every domain any stage draws from.
    let mut train_corpora: BTreeMap<DomainId, ParallelCorpus> = BTreeMap::new();
    for stage in &schedule.stages {
        for component in stage.data.components() {
            if !train_corpora.contains_key(&component.domain) {
                let corpus =
                    workspace::load_split(&ctx.root, &lang, &component.domain, Split::Train)?;
                train_corpora.insert(component.domain.clone(), corpus);
            }
        }
    }
    let test = workspace::load_split(&ctx.root, &lang, &schedule.test.0, schedule.test.1)?;

    // One subword model over everything the schedule trains on, so every
    // stage shares a vocabulary.
    let refs: Vec<&ParallelCorpus> = train_corpora.values().collect();
    let subword = train_bpe(&refs, eff.model.vocab_size)
        .context("training the subword model over the schedule's corpora")?;
    println!(
        "subword model: {} tokens over {} domain(s)",
        subword.vocab_size(),
        train_corpora.len()
    );

    let ckpt_dir = workspace::checkpoints_dir(&ctx.root, &schedule.id);
    fs::create_dir_all(&ckpt_dir)
        .with_context(|| format!("creating {}", ckpt_dir.display()))?;

    let mut params = ModelParams::init(&eff.model, manifest.base_seed)?;
    let mut checkpoint_files: Vec<String> = Vec::new();
    let mut final_mix: Option<MixedDataset> = None;
    for (i, stage) in schedule.stages.iter().enumerate() {
        let stage_refs: Vec<&ParallelCorpus> = stage
            .data
            .components()
            .iter()
            .map(|c| &train_corpora[&c.domain])
            .collect();
        let mixed = mix(&stage_refs, &stage.data)?;
        let stage_cfg = stage.train.clone().unwrap_or_else(|| eff.train.clone());
        println!(
            "stage {}/{}: {} on {} pairs",
            i + 1,
            schedule.stages.len(),
            stage.objective.slug(),
            mixed.len()
        );
        let log = train_stage(
            &mut params,
            &mixed,
            stage.objective,
            &subword,
            &eff.noise,
            &stage_cfg,
        )?;
        for (e, loss) in log.epoch_losses.iter().enumerate() {
            println!("  epoch {}: loss {loss:.4}", e + 1);
        }
        let file = ckpt_dir.join(format!("stage-{}.ckpt", i + 1));
        checkpoint::save(&params, &file)?;
        checkpoint_files.push(format!("checkpoints/{}/stage-{}.ckpt", schedule.id, i + 1));
        final_mix = Some(mixed);
    }
    let final_mix = final_mix.expect("schedules are validated non-empty");

    let subword_rel = format!("checkpoints/{}/subword.json", schedule.id);
    let mut subword_json = serde_json::to_string_pretty(&subword)?;
    subword_json.push('\n');
    fs::write(ctx.root.join(&subword_rel), subword_json)
        .with_context(|| format!("writing {subword_rel}"))?;

    let eval = evaluate(&params, &subword, &schedule.id, &test, eff.tokenizer(&subword)?)?;
    let final_corpus = mixture_corpus(&final_mix, &manifest)?;
    let jsd = corpus_jsd(
        &final_corpus,
        &test,
        eff.side()?,
        &eff.stopwords(&ctx.root)?,
    )?;

    let row = RunResult {
        schedule_id: schedule.id.clone(),
        strategy: schedule.strategy,
        mode: ModeKind::from(&schedule.mode),
        test_domain: schedule.test.0.clone(),
        im_size: schedule.im_size,
        fi_size: schedule.fi_size,
        metric: eval.metric,
        score: eval.score,
        jsd_final_to_test: jsd,
    };
    let outcome = results::append(&workspace::results_path(&ctx.root), &row)?;
    println!("result: {}", results::format_row(&row));
    if outcome == results::AppendOutcome::AlreadyRecorded {
        println!("(identical row already recorded; results store unchanged)");
    }

    manifest.trained_at = Some(now_utc());
    manifest.outputs = Outputs {
        checkpoints: checkpoint_files,
        subword: Some(subword_rel),
        results_row: true,
    };
    manifest.save(&path)?;
    println!("manifest updated: {}", path.display());
    Ok(())
}
