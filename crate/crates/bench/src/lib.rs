//! Deterministic fixtures for the criterion benches.
//!
//! Inputs are synthesized arithmetically — no RNG, no files — so every run
//! on every machine benches identical data.

use std::collections::BTreeMap;

use domaincraft_core::corpus::{DomainId, LangPair, ParallelCorpus, Split};
use domaincraft_core::divergence::FreqDist;

/// Skewed pseudo-rank in `0..vocab`: products of two residues pile up on
/// small values, giving a long-tailed token mix like real text.
fn rank(i: usize, k: usize, vocab: usize) -> usize {
    let h = i.wrapping_mul(1_000_003).wrapping_add(k.wrapping_mul(7919));
    ((h % vocab) * ((h / vocab) % vocab)) / vocab
}

/// Builds a parallel corpus of `pairs` sentences over a `vocab`-word
/// vocabulary (source `w{r}`, target `t{r}`, aligned word for word).
pub fn sample_corpus(pairs: usize, vocab: usize, phase: usize) -> ParallelCorpus {
    let lines = (0..pairs).map(|i| {
        let len = 4 + (i + phase) % 5;
        let ranks: Vec<usize> = (0..len).map(|k| rank(i + phase, k, vocab)).collect();
        let src: Vec<String> = ranks.iter().map(|r| format!("w{r}")).collect();
        let tgt: Vec<String> = ranks.iter().map(|r| format!("t{r}")).collect();
        (src.join(" "), tgt.join(" "))
    });
    ParallelCorpus::from_lines(
        DomainId::new("bench").unwrap(),
        LangPair::new("de", "en").unwrap(),
        Split::Train,
        lines,
    )
    .unwrap()
    .corpus
}

/// A normalized long-tailed distribution over `support` tokens; `offset`
/// shifts the weights so two calls give overlapping but distinct mass.
pub fn sample_distribution(support: usize, offset: usize) -> FreqDist {
    let weights: BTreeMap<String, f64> = (0..support)
        .map(|r| (format!("tok{r}"), 1.0 / (r + offset + 1) as f64))
        .collect();
    FreqDist::from_weights(weights).unwrap()
}
