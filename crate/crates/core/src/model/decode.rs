//! Greedy translation: encode once, then extend the decoder prefix with the
//! argmax token until EOS or the length cap.

use crate::model::net::{self, NetError};
use crate::model::params::ModelParams;
use crate::model::subword::{SubwordModel, BOS_ID, EOS_ID, LANG_SRC_ID, LANG_TGT_ID};

/// Argmax with ties broken toward the lowest token id.
fn argmax(row: ndarray::ArrayView1<'_, f64>) -> u32 {
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best as u32
}

/// Translates one source sentence. Deterministic: greedy argmax continuation
/// from `[BOS, target-language]`, stopping at EOS or the model length cap.
pub fn translate(
    params: &ModelParams,
    subword: &SubwordModel,
    source: &str,
) -> Result<String, NetError> {
    let cfg = params.config();
    let cap = cfg.max_len.saturating_sub(3);
    let mut src = subword.encode(source);
    src.truncate(cap);
    let mut enc_input = Vec::with_capacity(src.len() + 2);
    enc_input.push(LANG_SRC_ID);
    enc_input.extend_from_slice(&src);
    enc_input.push(EOS_ID);

    let mut dec = vec![BOS_ID, LANG_TGT_ID];
    while dec.len() < cfg.max_len {
        let logits = net::forward_logits(params, &enc_input, &dec)?;
        let next = argmax(logits.row(logits.nrows() - 1));
        if next == EOS_ID {
            break;
        }
        dec.push(next);
    }
    Ok(subword.decode(&dec[2..]))
}

/// Translates a slice of sentences, preserving order.
pub fn translate_batch(
    params: &ModelParams,
    subword: &SubwordModel,
    sources: &[String],
) -> Result<Vec<String>, NetError> {
    sources
        .iter()
        .map(|s| translate(params, subword, s))
        .collect()
}
