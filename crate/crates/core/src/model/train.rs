//! Seeded single-stage training: framed batch construction for each
//! objective, Adam updates over the flat parameter buffer, and per-epoch
//! loss logging.
//!
//! Every source of randomness — item order, noise masks, dropout — is a
//! labeled stream derived from the stage's training seed, so a stage is
//! bitwise reproducible. Optimizer state lives and dies inside
//! [`train_stage`]: a later stage always starts with fresh moments.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mixing::MixedDataset;
use crate::model::config::{ConfigError, ModelConfig, NoiseConfig, TrainConfig};
use crate::model::net::{self, Batch, BatchItem, DropoutRates, NetError};
use crate::model::noise::noise;
use crate::model::params::ModelParams;
use crate::model::subword::{SubwordModel, BOS_ID, EOS_ID, LANG_SRC_ID, LANG_TGT_ID};
use crate::seeding::{derive_seed, rng_for};
use crate::strategy::Objective;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("training data is empty")]
    EmptyDataset,
    #[error("subword vocabulary ({subword}) exceeds model vocabulary ({model})")]
    VocabMismatch { subword: usize, model: usize },
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch}; \
         parameters rolled back to the last finite snapshot"
    )]
    NumericDivergence { epoch: usize, batch: usize },
}

/// Summary of one completed training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Token-weighted mean training loss (nats) per epoch.
    pub epoch_losses: Vec<f64>,
    /// Total optimizer steps taken.
    pub batches: usize,
    /// Total predicted tokens across all epochs.
    pub target_tokens: usize,
}

/// A sentence pair as truncated content-token ids, ready for framing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPair {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
}

/// Encodes and truncates every pair so that any framing (2 tokens on the
/// encoder side, 3 on the decoder side) fits within the model's `max_len`.
pub fn tokenize_pairs(
    data: &MixedDataset,
    subword: &SubwordModel,
    model_cfg: &ModelConfig,
) -> Vec<TokenizedPair> {
    let cap = model_cfg.max_len.saturating_sub(3);
    data.pairs()
        .iter()
        .map(|(pair, _)| {
            let mut src = subword.encode(&pair.source);
            src.truncate(cap);
            let mut tgt = subword.encode(&pair.target);
            tgt.truncate(cap);
            TokenizedPair { src, tgt }
        })
        .collect()
}

fn frame(enc_tag: u32, enc_content: &[u32], dec_tag: u32, dec_content: &[u32]) -> BatchItem {
    let mut enc_input = Vec::with_capacity(enc_content.len() + 2);
    enc_input.push(enc_tag);
    enc_input.extend_from_slice(enc_content);
    enc_input.push(EOS_ID);
    let mut dec_full = Vec::with_capacity(dec_content.len() + 3);
    dec_full.push(BOS_ID);
    dec_full.push(dec_tag);
    dec_full.extend_from_slice(dec_content);
    dec_full.push(EOS_ID);
    BatchItem { enc_input, dec_full }
}

fn chunk(items: Vec<BatchItem>, size: usize) -> Vec<Batch> {
    items
        .chunks(size)
        .map(|c| Batch { items: c.to_vec() })
        .collect()
}

/// Translation items (optionally with a noised source side), in a seeded
/// per-epoch order.
fn bitext_items(
    pairs: &[TokenizedPair],
    noised: bool,
    noise_cfg: &NoiseConfig,
    cfg: &TrainConfig,
    epoch: usize,
    order_label: &str,
) -> Vec<BatchItem> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, &format!("{order_label}.{epoch}")));
    order
        .into_iter()
        .map(|i| {
            let p = &pairs[i];
            let enc = if noised {
                noise(
                    &p.src,
                    noise_cfg,
                    derive_seed(cfg.seed, &format!("train.noise.{epoch}.{i}.src")),
                )
            } else {
                p.src.clone()
            };
            frame(LANG_SRC_ID, &enc, LANG_TGT_ID, &p.tgt)
        })
        .collect()
}

/// Reconstruction items: each pair contributes its source and target sides
/// as independent noised-input → clean-output examples.
fn mono_items(
    pairs: &[TokenizedPair],
    noise_cfg: &NoiseConfig,
    cfg: &TrainConfig,
    epoch: usize,
    order_label: &str,
) -> Vec<BatchItem> {
    let mut expanded: Vec<(usize, bool)> = (0..pairs.len())
        .flat_map(|i| [(i, false), (i, true)])
        .collect();
    expanded.shuffle(&mut rng_for(cfg.seed, &format!("{order_label}.{epoch}")));
    expanded
        .into_iter()
        .map(|(i, tgt_side)| {
            let (content, tag, side) = if tgt_side {
                (&pairs[i].tgt, LANG_TGT_ID, "tgt")
            } else {
                (&pairs[i].src, LANG_SRC_ID, "src")
            };
            let enc = noise(
                content,
                noise_cfg,
                derive_seed(cfg.seed, &format!("train.noise.{epoch}.{i}.{side}")),
            );
            frame(tag, &enc, tag, content)
        })
        .collect()
}

fn interleave(a: Vec<Batch>, b: Vec<Batch>) -> Vec<Batch> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut ia = a.into_iter();
    let mut ib = b.into_iter();
    loop {
        let (x, y) = (ia.next(), ib.next());
        if x.is_none() && y.is_none() {
            break;
        }
        out.extend(x);
        out.extend(y);
    }
    out
}

/// Framed, shuffled, chunked batches for one epoch of one objective.
pub fn build_epoch_batches(
    objective: Objective,
    pairs: &[TokenizedPair],
    noise_cfg: &NoiseConfig,
    cfg: &TrainConfig,
    epoch: usize,
) -> Vec<Batch> {
    match objective {
        Objective::Nmt => chunk(
            bitext_items(pairs, false, noise_cfg, cfg, epoch, "train.order"),
            cfg.batch_size,
        ),
        Objective::BitextDenoise => chunk(
            bitext_items(pairs, true, noise_cfg, cfg, epoch, "train.order"),
            cfg.batch_size,
        ),
        Objective::MonoDenoise => chunk(
            mono_items(pairs, noise_cfg, cfg, epoch, "train.order"),
            cfg.batch_size,
        ),
        Objective::BitextPlusMonoDenoise => {
            let bitext = chunk(
                bitext_items(pairs, true, noise_cfg, cfg, epoch, "train.order.bitext"),
                cfg.batch_size,
            );
            let mono = chunk(
                mono_items(pairs, noise_cfg, cfg, epoch, "train.order.mono"),
                cfg.batch_size,
            );
            interleave(bitext, mono)
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, values: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..values.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            // A zero learning rate must leave parameters bitwise untouched,
            // so the write itself is skipped rather than adding ±0.0.
            if lr > 0.0 {
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
            }
        }
    }
}

/// Runs one objective over one dataset for the configured number of epochs,
/// updating `params` in place with Adam. On numeric divergence the
/// parameters are rolled back to the most recent finite snapshot (stage
/// start or an epoch boundary) and an error names the failing batch.
pub fn train_stage(
    params: &mut ModelParams,
    data: &MixedDataset,
    objective: Objective,
    subword: &SubwordModel,
    noise_cfg: &NoiseConfig,
    cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    cfg.validate()?;
    noise_cfg.validate()?;
    let model_cfg = params.config().clone();
    if subword.vocab_size() > model_cfg.vocab_size {
        return Err(TrainError::VocabMismatch {
            subword: subword.vocab_size(),
            model: model_cfg.vocab_size,
        });
    }
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let tokenized = tokenize_pairs(data, subword, &model_cfg);
    let rates = DropoutRates {
        residual: cfg.dropout.unwrap_or(model_cfg.dropout),
        attention: cfg.attention_dropout.unwrap_or(model_cfg.attention_dropout),
    };
    let mut dropout_rng = rng_for(cfg.seed, "train.dropout");
    let mut adam = Adam::new(params.layout().total_len());
    let mut snapshot: Option<Vec<f64>> = params.is_finite().then(|| params.values().to_vec());
    let mut log = TrainLog {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        batches: 0,
        target_tokens: 0,
    };
    for epoch in 0..cfg.epochs {
        let batches = build_epoch_batches(objective, &tokenized, noise_cfg, cfg, epoch);
        let mut loss_weighted = 0.0;
        let mut tokens = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let step = net::loss_and_grad(params, batch, Some((rates, &mut dropout_rng)));
            let (loss, grads) = match step {
                Ok(ok) => ok,
                Err(NetError::NonFiniteLoss) => {
                    if let Some(s) = &snapshot {
                        params.values_mut().copy_from_slice(s);
                    }
                    return Err(TrainError::NumericDivergence { epoch, batch: bi });
                }
                Err(e) => return Err(e.into()),
            };
            if grads.iter().any(|g| !g.is_finite()) {
                if let Some(s) = &snapshot {
                    params.values_mut().copy_from_slice(s);
                }
                return Err(TrainError::NumericDivergence { epoch, batch: bi });
            }
            adam.step(params.values_mut(), &grads, cfg.learning_rate);
            debug_assert!(params.is_finite(), "finite grads kept parameters finite");
            let btoks = batch.target_tokens();
            loss_weighted += loss * btoks as f64;
            tokens += btoks;
            log.batches += 1;
        }
        log.epoch_losses.push(loss_weighted / tokens as f64);
        log.target_tokens += tokens;
        if params.is_finite() {
            snapshot = Some(params.values().to_vec());
        }
    }
    Ok(log)
}
