//! Corpus-level BLEU in word and subword tokenizations.
//!
//! Unsmoothed: modified n-gram precisions (n = 1..4) are aggregated over the
//! whole corpus, combined by geometric mean, and scaled by the brevity
//! penalty; any zero precision zeroes the score. Results are on the 0–100
//! scale.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DomainId, ParallelCorpus};
use crate::model::net::NetError;
use crate::model::params::ModelParams;
use crate::model::{translate_batch, SubwordModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("hypothesis and reference counts differ: {hypotheses} vs {references}")]
    LengthMismatch {
        hypotheses: usize,
        references: usize,
    },
    #[error("cannot score an empty corpus")]
    Empty,
    #[error("test corpus {0} is empty")]
    EmptyTestCorpus(DomainId),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// How text is split into scoring tokens.
#[derive(Clone, Copy)]
pub enum BleuTokenizer<'a> {
    /// Whitespace words.
    Word,
    /// Subword pieces from a trained BPE model.
    Subword(&'a SubwordModel),
}

impl BleuTokenizer<'_> {
    /// Metric name recording the tokenization mode.
    pub fn metric_name(&self) -> &'static str {
        match self {
            BleuTokenizer::Word => "bleu-word",
            BleuTokenizer::Subword(_) => "bleu-subword",
        }
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        match self {
            BleuTokenizer::Word => text.split_whitespace().map(str::to_string).collect(),
            BleuTokenizer::Subword(model) => {
                model.encode(text).iter().map(|id| id.to_string()).collect()
            }
        }
    }
}

/// Score row for one evaluated schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub schedule_id: String,
    pub test_domain: DomainId,
    pub metric: String,
    /// 0–100.
    pub score: f64,
    pub hypothesis_count: usize,
}

const MAX_N: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU of `hypotheses` against single `references`, 0–100.
///
/// Clipped n-gram matches and n-gram totals are summed over all pairs before
/// the precisions are formed, so the score is a corpus statistic, not an
/// average of sentence scores.
pub fn bleu(hypotheses: &[String], references: &[String], tokenizer: BleuTokenizer) -> Result<f64, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut matches = [0u64; MAX_N];
    let mut totals = [0u64; MAX_N];
    let mut hyp_len = 0u64;
    let mut ref_len = 0u64;
    for (hyp, reference) in hypotheses.iter().zip(references) {
        let hyp_tokens = tokenizer.tokenize(hyp);
        let ref_tokens = tokenizer.tokenize(reference);
        hyp_len += hyp_tokens.len() as u64;
        ref_len += ref_tokens.len() as u64;
        for n in 1..=MAX_N {
            let hyp_grams = ngram_counts(&hyp_tokens, n);
            let ref_grams = ngram_counts(&ref_tokens, n);
            for (gram, &count) in &hyp_grams {
                let clip = ref_grams.get(gram).copied().unwrap_or(0);
                matches[n - 1] += count.min(clip);
            }
            totals[n - 1] += hyp_grams.values().sum::<u64>();
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_precision_sum = 0.0;
    for n in 0..MAX_N {
        if matches[n] == 0 || totals[n] == 0 {
            return Ok(0.0);
        }
        log_precision_sum += (matches[n] as f64 / totals[n] as f64).ln();
    }
    let brevity = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok((brevity * (log_precision_sum / MAX_N as f64).exp() * 100.0).clamp(0.0, 100.0))
}

/// Greedy-translates the test corpus with a trained model and scores the
/// hypotheses against the references with corpus BLEU.
pub fn evaluate(
    params: &ModelParams,
    subword: &SubwordModel,
    schedule_id: &str,
    test: &ParallelCorpus,
    tokenizer: BleuTokenizer<'_>,
) -> Result<EvalResult, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestCorpus(test.domain.clone()));
    }
    let sources: Vec<String> = test.pairs().iter().map(|p| p.source.clone()).collect();
    let references: Vec<String> = test.pairs().iter().map(|p| p.target.clone()).collect();
    let hypotheses = translate_batch(params, subword, &sources)?;
    let score = bleu(&hypotheses, &references, tokenizer)?;
    Ok(EvalResult {
        schedule_id: schedule_id.to_string(),
        test_domain: test.domain.clone(),
        metric: tokenizer.metric_name().to_string(),
        score,
        hypothesis_count: hypotheses.len(),
    })
}
