//! `synth` — generate synthetic multi-domain corpora into the workspace,
//! optionally calibrating the vocabulary overlap to a target divergence.

use anyhow::{anyhow, Result};
use clap::Args;
use domaincraft_core::corpus::{domain_dir, DomainId};
use domaincraft_core::synth::{calibrate_overlap, generate, SynthDomain, SynthSpec};

use crate::commands::Ctx;
use crate::workspace;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Comma-separated domain specs, each `id:vocab_size:overlap`
    /// (e.g. `news:60:0.5,law:60:0.2`).
    #[arg(long)]
    pub domains: String,
    /// Minimum sentence length in words.
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    /// Maximum sentence length in words.
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
    /// Training pairs per domain.
    #[arg(long, default_value_t = 1000)]
    pub train_size: usize,
    /// Dev pairs per domain.
    #[arg(long, default_value_t = 100)]
    pub dev_size: usize,
    /// Test pairs per domain.
    #[arg(long, default_value_t = 200)]
    pub test_size: usize,
    /// Seed of the target-side translation rule (defaults to the base seed).
    #[arg(long)]
    pub rule_seed: Option<u64>,
    /// Calibrate every domain's overlap so the measured divergence between
    /// the first two domains hits this value, overriding the per-domain
    /// overlaps given in --domains.
    #[arg(long)]
    pub target_jsd: Option<f64>,
}

fn parse_domains(text: &str) -> Result<Vec<SynthDomain>> {
    text.split(',')
        .map(|part| {
            let fields: Vec<&str> = part.trim().split(':').collect();
            let [id, vocab, overlap] = fields[..] else {
                return Err(anyhow!(
                    "domain spec {part:?} is not of the form id:vocab_size:overlap"
                ));
            };
            Ok(SynthDomain {
                id: DomainId::new(id)?,
                vocab_size: vocab.parse().map_err(|e| anyhow!("vocab size {vocab:?}: {e}"))?,
                overlap: overlap.parse().map_err(|e| anyhow!("overlap {overlap:?}: {e}"))?,
            })
        })
        .collect()
}

pub fn run(ctx: &Ctx, args: &SynthArgs) -> Result<()> {
    workspace::ensure_layout(&ctx.root)?;
    let lang = ctx.config.lang()?;
    let seed = ctx.config.seed()?;
    let mut spec = SynthSpec {
        domains: parse_domains(&args.domains)?,
        min_len: args.min_len,
        max_len: args.max_len,
        train_size: args.train_size,
        dev_size: args.dev_size,
        test_size: args.test_size,
        rule_seed: args.rule_seed.unwrap_or(seed),
        seed,
    };
    if let Some(target) = args.target_jsd {
        let overlap = calibrate_overlap(target, &spec)?;
        for dom in &mut spec.domains {
            dom.overlap = overlap;
        }
        println!("calibrated overlap {overlap:.4} for target divergence {target}");
    }
    let corpora = generate(&spec)?;
    for corpus in &corpora {
        let stem = domain_dir(&ctx.root, &lang, &corpus.domain).join(corpus.split.as_str());
        corpus.save(&stem)?;
        println!(
            "wrote corpora/{}/{}/{}.{{src,tgt}}.txt ({} pairs)",
            lang.dir_name(),
            corpus.domain,
            corpus.split,
            corpus.len()
        );
    }
    Ok(())
}
