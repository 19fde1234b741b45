//! End-to-end checks on the full model path: train on a synthetic copy task,
//! translate held-out sentences, score with corpus BLEU, and round-trip
//! checkpoints — including resuming a second training stage from disk.
//!
//! The expensive training run is shared across tests through a `OnceLock`.

use std::path::Path;
use std::sync::OnceLock;

use domaincraft_core::corpus::{DomainId, LangPair, ParallelCorpus, Split};
use domaincraft_core::mixing::{mix, DatasetSpec, MixedDataset};
use domaincraft_core::model::checkpoint;
use domaincraft_core::model::decode::{translate, translate_batch};
use domaincraft_core::model::subword::train_bpe;
use domaincraft_core::model::{
    train_stage, ModelConfig, ModelParams, NoiseConfig, SubwordModel, TrainConfig,
};
use domaincraft_core::strategy::Objective;
use domaincraft_core::{evaluate, BleuTokenizer};

const WORDS: [&str; 6] = ["alfa", "bravo", "kilo", "lima", "nona", "oto"];

/// The i-th sentence of a fixed enumeration of all 6^4 four-word
/// combinations, visited in a stride order so that any prefix is a
/// representative sample.
fn sentence(i: usize) -> String {
    let mut j = (i * 607) % 1296; // 607 is coprime to 1296: a bijection
    let mut parts = Vec::with_capacity(4);
    for _ in 0..4 {
        parts.push(WORDS[j % 6]);
        j /= 6;
    }
    parts.join(" ")
}

fn copy_corpus(range: std::ops::Range<usize>, split: Split) -> ParallelCorpus {
    let lines = range.map(|i| {
        let s = sentence(i);
        (s.clone(), s)
    });
    ParallelCorpus::from_lines(
        DomainId::new("copy").unwrap(),
        LangPair::new("de", "en").unwrap(),
        split,
        lines,
    )
    .unwrap()
    .corpus
}

fn model_cfg(width: usize) -> ModelConfig {
    ModelConfig {
        layers: 1,
        heads: 2,
        width,
        ffn_width: 2 * width,
        max_len: 32,
        dropout: 0.0,
        attention_dropout: 0.0,
        vocab_size: 64,
    }
}

struct Trained {
    params: ModelParams,
    subword: SubwordModel,
    cfg: ModelConfig,
    test: ParallelCorpus,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let train = copy_corpus(0..600, Split::Train);
        let test = copy_corpus(600..640, Split::Test);
        let subword = train_bpe(&[&train], 64).unwrap();
        let spec = DatasetSpec::single(DomainId::new("copy").unwrap(), 600, false, 11).unwrap();
        let data = mix(&[&train], &spec).unwrap();
        let cfg = model_cfg(32);
        let mut params = ModelParams::init(&cfg, 1).unwrap();
        let train_cfg = TrainConfig {
            epochs: 5,
            learning_rate: 1e-2,
            batch_size: 32,
            seed: 222,
            dropout: None,
            attention_dropout: None,
        };
        let log = train_stage(
            &mut params,
            &data,
            Objective::Nmt,
            &subword,
            &NoiseConfig::default(),
            &train_cfg,
        )
        .unwrap();
        eprintln!("copy-task epoch losses: {:?}", log.epoch_losses);
        Trained {
            params,
            subword,
            cfg,
            test,
        }
    })
}

#[test]
fn trained_model_copies_heldout_sentences() {
    let t = trained();
    let mut exact = 0usize;
    for pair in t.test.pairs() {
        let out = translate(&t.params, &t.subword, &pair.source).unwrap();
        if out == pair.target {
            exact += 1;
        }
    }
    let total = t.test.pairs().len();
    assert!(
        exact * 10 >= total * 9,
        "expected at least 90% exact copies on held-out sentences, got {exact}/{total}"
    );
}

#[test]
fn bleu_separates_trained_from_untrained() {
    let t = trained();
    let good = evaluate(
        &t.params,
        &t.subword,
        "copy-trained",
        &t.test,
        BleuTokenizer::Word,
    )
    .unwrap();
    assert!(
        good.score > 90.0,
        "trained copy model should score high BLEU, got {}",
        good.score
    );
    assert_eq!(good.hypothesis_count, t.test.pairs().len());
    assert_eq!(good.metric, "bleu-word");

    let fresh = ModelParams::init(&t.cfg, 999).unwrap();
    let bad = evaluate(
        &fresh,
        &t.subword,
        "copy-untrained",
        &t.test,
        BleuTokenizer::Word,
    )
    .unwrap();
    assert!(
        bad.score < 5.0,
        "untrained model should score near-zero BLEU, got {}",
        bad.score
    );
}

#[test]
fn checkpoint_roundtrip_preserves_translations() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.ckpt");
    checkpoint::save(&t.params, &path).unwrap();
    let loaded = checkpoint::load(&path).unwrap();
    assert!(t
        .params
        .values()
        .iter()
        .zip(loaded.values())
        .all(|(a, b)| a.to_bits() == b.to_bits()));

    let sources: Vec<String> = t.test.pairs().iter().map(|p| p.source.clone()).collect();
    let before = translate_batch(&t.params, &t.subword, &sources).unwrap();
    let after = translate_batch(&loaded, &t.subword, &sources).unwrap();
    assert_eq!(before, after);
}

/// Training a second stage on parameters reloaded from disk must be
/// bit-for-bit identical to continuing in memory: the checkpoint carries
/// everything the next stage depends on.
#[test]
fn resumed_stage_matches_continuous_training() {
    let train = copy_corpus(0..128, Split::Train);
    let subword = train_bpe(&[&train], 64).unwrap();
    let spec = DatasetSpec::single(DomainId::new("copy").unwrap(), 128, false, 11).unwrap();
    let data = mix(&[&train], &spec).unwrap();
    let cfg = model_cfg(16);
    let noise = NoiseConfig::default();
    let stage = |seed: u64| TrainConfig {
        epochs: 1,
        learning_rate: 1e-3,
        batch_size: 32,
        seed,
        dropout: Some(0.1),
        attention_dropout: Some(0.1),
    };
    let run_stage = |params: &mut ModelParams, obj: Objective, cfg: &TrainConfig| {
        train_stage(params, &data, obj, &subword, &noise, cfg).unwrap()
    };

    // Continuous: two stages back to back in memory.
    let mut continuous = ModelParams::init(&cfg, 7).unwrap();
    run_stage(&mut continuous, Objective::BitextDenoise, &stage(33));
    let log_mem = run_stage(&mut continuous, Objective::Nmt, &stage(44));

    // Resumed: same first stage, checkpoint to disk, reload, same second stage.
    let dir = tempfile::tempdir().unwrap();
    let path: &Path = &dir.path().join("stage1.ckpt");
    let mut resumed = ModelParams::init(&cfg, 7).unwrap();
    run_stage(&mut resumed, Objective::BitextDenoise, &stage(33));
    checkpoint::save(&resumed, path).unwrap();
    let mut resumed = checkpoint::load(path).unwrap();
    let log_disk = run_stage(&mut resumed, Objective::Nmt, &stage(44));

    assert_eq!(log_mem, log_disk);
    assert!(continuous
        .values()
        .iter()
        .zip(resumed.values())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}
