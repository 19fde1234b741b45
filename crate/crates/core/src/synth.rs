//! Synthetic multi-domain parallel corpora with controllable divergence.
//!
//! Each domain draws sentences from a Zipf-distributed vocabulary whose most
//! frequent ranks come from a core word list shared across domains; the
//! `overlap` fraction controls how much of the vocabulary is shared, and
//! through it the measured divergence between domains. The target side is a
//! seeded bijective word substitution followed by swapping adjacent token
//! pairs — a translation that is deterministic, invertible, and learnable by
//! a small model. [`calibrate_overlap`] inverts the overlap→divergence curve
//! by bisection so experiments can be positioned at a requested divergence.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, DomainId, LangPair, ParallelCorpus, Split};
use crate::divergence::{corpus_jsd, DivergenceError, SidePolicy, Stopwords};
use crate::seeding::rng_for;

/// Frequency-rank exponent of the within-vocabulary Zipf sampler.
const ZIPF_EXPONENT: f64 = 1.0;

/// How close (absolute divergence) calibration must land to its target.
pub const CALIBRATION_TOLERANCE: f64 = 0.05;

/// Errors from synthetic generation and calibration.
#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    Config(String),
    #[error(
        "target divergence {target:.3} is unreachable under this template: \
         achievable range is [{min:.3}, {max:.3}] (±{tol})",
        tol = CALIBRATION_TOLERANCE
    )]
    UnreachableTarget { target: f64, min: f64, max: f64 },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
}

/// One synthetic domain: vocabulary size and the fraction of that
/// vocabulary drawn from the shared core word list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDomain {
    pub id: DomainId,
    /// Number of distinct word types available to this domain.
    pub vocab_size: usize,
    /// Fraction of the vocabulary shared with other domains, in [0, 1].
    /// The most frequent ranks are shared first.
    pub overlap: f64,
}

/// Full description of a synthetic multi-domain corpus set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub domains: Vec<SynthDomain>,
    /// Sentence length bounds in words, inclusive.
    pub min_len: usize,
    pub max_len: usize,
    /// Sentence pairs per split, for every domain.
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    /// Seeds the target-side word bijection.
    pub rule_seed: u64,
    /// Seeds sentence sampling; each (domain, split) derives its own stream.
    pub seed: u64,
}

impl SynthSpec {
    /// Checks the structural invariants; [`generate`] calls this first.
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.domains.is_empty() {
            return Err(SynthError::Config("at least one domain is required".into()));
        }
        let mut seen = BTreeSet::new();
        for dom in &self.domains {
            if dom.vocab_size == 0 {
                return Err(SynthError::Config(format!(
                    "domain {}: vocabulary size must be at least 1",
                    dom.id
                )));
            }
            if !dom.overlap.is_finite() || !(0.0..=1.0).contains(&dom.overlap) {
                return Err(SynthError::Config(format!(
                    "domain {}: overlap {} is outside [0, 1]",
                    dom.id, dom.overlap
                )));
            }
            if !seen.insert(dom.id.clone()) {
                return Err(SynthError::Config(format!("duplicate domain id {}", dom.id)));
            }
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(SynthError::Config(format!(
                "sentence length range {}..={} is invalid",
                self.min_len, self.max_len
            )));
        }
        for (name, size) in [
            ("train", self.train_size),
            ("dev", self.dev_size),
            ("test", self.test_size),
        ] {
            if size == 0 {
                return Err(SynthError::Config(format!(
                    "{name} split size must be at least 1"
                )));
            }
        }
        Ok(())
    }
}

/// Letters-only index encoding (base 23, `a`–`w`), keeping `x` free as an
/// unambiguous separator inside composite word forms. Purely alphabetic
/// surfaces survive text normalization intact.
fn alpha(mut n: usize) -> String {
    let mut digits = Vec::new();
    loop {
        digits.push(b'a' + (n % 23) as u8);
        n /= 23;
        if n == 0 {
            break;
        }
    }
    digits.reverse();
    String::from_utf8(digits).expect("ascii letters")
}

fn core_word(rank: usize) -> String {
    format!("c{}", alpha(rank))
}

fn private_word(domain_index: usize, rank: usize) -> String {
    format!("d{}x{}", alpha(domain_index), alpha(rank))
}

/// The rank-ordered vocabulary of one domain: the first
/// `round(overlap · size)` ranks are core words (identical across domains),
/// the rest are private to the domain.
fn domain_vocab(domain_index: usize, dom: &SynthDomain) -> Vec<String> {
    let shared = ((dom.overlap * dom.vocab_size as f64).round() as usize).min(dom.vocab_size);
    (0..dom.vocab_size)
        .map(|rank| {
            if rank < shared {
                core_word(rank)
            } else {
                private_word(domain_index, rank)
            }
        })
        .collect()
}

/// Seeded bijection from every source word type to a distinct target word.
fn translation_rule(vocabs: &[Vec<String>], rule_seed: u64) -> BTreeMap<String, String> {
    let words: BTreeSet<&String> = vocabs.iter().flatten().collect();
    let mut codes: Vec<usize> = (0..words.len()).collect();
    codes.shuffle(&mut rng_for(rule_seed, "synth.rule"));
    words
        .into_iter()
        .zip(codes)
        .map(|(word, code)| (word.clone(), format!("t{}", alpha(code))))
        .collect()
}

/// The fixed local reordering: swap tokens pairwise (positions 0↔1, 2↔3, …).
/// Applying it twice restores the original order.
fn swap_adjacent<T>(items: &mut [T]) {
    for pair in items.chunks_exact_mut(2) {
        pair.swap(0, 1);
    }
}

/// Generates all corpora described by `spec`: three per domain
/// (train, dev, test), in spec order.
///
/// Sentence sampling draws word ranks from a Zipf distribution and is
/// independent of the overlap setting, so respecifying only the overlap
/// changes which words the ranks render as — never the sampled structure.
/// Regeneration under the same spec is byte-identical.
pub fn generate(spec: &SynthSpec) -> Result<Vec<ParallelCorpus>, SynthError> {
    spec.validate()?;
    let vocabs: Vec<Vec<String>> = spec
        .domains
        .iter()
        .enumerate()
        .map(|(d, dom)| domain_vocab(d, dom))
        .collect();
    let rule = translation_rule(&vocabs, spec.rule_seed);
    let lang = LangPair::new("xx", "yy").expect("fixed synthetic language pair");
    let splits = [
        (Split::Train, spec.train_size),
        (Split::Dev, spec.dev_size),
        (Split::Test, spec.test_size),
    ];
    let mut out = Vec::with_capacity(spec.domains.len() * splits.len());
    for (d, dom) in spec.domains.iter().enumerate() {
        let zipf =
            Zipf::new(dom.vocab_size as u64, ZIPF_EXPONENT).expect("validated vocabulary size");
        for (split, size) in splits {
            let mut rng = rng_for(spec.seed, &format!("synth.{}.{split}", dom.id));
            let mut lines = Vec::with_capacity(size);
            for _ in 0..size {
                let len = rng.gen_range(spec.min_len..=spec.max_len);
                let ranks: Vec<usize> = (0..len)
                    .map(|_| zipf.sample(&mut rng) as usize - 1)
                    .collect();
                let source: Vec<&str> = ranks.iter().map(|&r| vocabs[d][r].as_str()).collect();
                let mut target: Vec<&str> =
                    source.iter().map(|&w| rule[w].as_str()).collect();
                swap_adjacent(&mut target);
                lines.push((source.join(" "), target.join(" ")));
            }
            let report = ParallelCorpus::from_lines(dom.id.clone(), lang.clone(), split, lines)?;
            debug_assert_eq!(report.dropped, 0, "generated lines are never empty");
            out.push(report.corpus);
        }
    }
    Ok(out)
}

/// Measured train-split divergence between the template's first two domains
/// with every domain's overlap forced to `overlap`.
fn measured_jsd(template: &SynthSpec, overlap: f64) -> Result<f64, SynthError> {
    let mut spec = template.clone();
    for dom in &mut spec.domains {
        dom.overlap = overlap;
    }
    let corpora = generate(&spec)?;
    // Layout is three corpora per domain; train is the first of each triple.
    let jsd = corpus_jsd(
        &corpora[0],
        &corpora[3],
        SidePolicy::Both,
        &Stopwords::default(),
    )?;
    Ok(jsd)
}

/// Finds an overlap fraction whose measured inter-domain divergence is
/// within [`CALIBRATION_TOLERANCE`] of `target_jsd`, by bisection.
///
/// Divergence is non-increasing in overlap under a fixed template (shared
/// ranks only ever grow, while the sampled rank sequences stay fixed), which
/// makes bisection exact up to the discreteness of the shared-rank count. A
/// target outside the achievable curve reports the achievable range.
pub fn calibrate_overlap(target_jsd: f64, template: &SynthSpec) -> Result<f64, SynthError> {
    template.validate()?;
    if template.domains.len() < 2 {
        return Err(SynthError::Config(
            "calibration needs at least two domains".into(),
        ));
    }
    if !target_jsd.is_finite() || !(0.0..=1.0).contains(&target_jsd) {
        return Err(SynthError::Config(format!(
            "target divergence {target_jsd} is outside [0, 1]"
        )));
    }
    let max = measured_jsd(template, 0.0)?;
    let min = measured_jsd(template, 1.0)?;
    let unreachable = || SynthError::UnreachableTarget {
        target: target_jsd,
        min,
        max,
    };
    if target_jsd > max + CALIBRATION_TOLERANCE || target_jsd < min - CALIBRATION_TOLERANCE {
        return Err(unreachable());
    }
    let mut best = if (max - target_jsd).abs() <= (min - target_jsd).abs() {
        (0.0, max)
    } else {
        (1.0, min)
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64); // divergence is high at lo, low at hi
    for _ in 0..32 {
        if (best.1 - target_jsd).abs() <= CALIBRATION_TOLERANCE {
            return Ok(best.0);
        }
        let mid = 0.5 * (lo + hi);
        let jsd = measured_jsd(template, mid)?;
        if (jsd - target_jsd).abs() < (best.1 - target_jsd).abs() {
            best = (mid, jsd);
        }
        if jsd > target_jsd {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - target_jsd).abs() <= CALIBRATION_TOLERANCE {
        Ok(best.0)
    } else {
        // The curve steps over the target without landing inside the band.
        Err(unreachable())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_domain_spec(overlap: f64) -> SynthSpec {
        SynthSpec {
            domains: vec![
                SynthDomain {
                    id: DomainId::new("alpha").unwrap(),
                    vocab_size: 40,
                    overlap,
                },
                SynthDomain {
                    id: DomainId::new("beta").unwrap(),
                    vocab_size: 40,
                    overlap,
                },
            ],
            min_len: 3,
            max_len: 9,
            train_size: 1500,
            dev_size: 1,
            test_size: 1,
            rule_seed: 41,
            seed: 42,
        }
    }

    fn train_jsd(overlap: f64) -> f64 {
        let corpora = generate(&two_domain_spec(overlap)).unwrap();
        corpus_jsd(
            &corpora[0],
            &corpora[3],
            SidePolicy::Both,
            &Stopwords::default(),
        )
        .unwrap()
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut spec = two_domain_spec(0.5);
        spec.domains[0].overlap = 1.5;
        assert!(matches!(spec.validate(), Err(SynthError::Config(_))));

        let mut spec = two_domain_spec(0.5);
        spec.domains[1].id = spec.domains[0].id.clone();
        assert!(matches!(spec.validate(), Err(SynthError::Config(_))));

        let mut spec = two_domain_spec(0.5);
        spec.min_len = 5;
        spec.max_len = 3;
        assert!(matches!(spec.validate(), Err(SynthError::Config(_))));

        let mut spec = two_domain_spec(0.5);
        spec.test_size = 0;
        assert!(matches!(spec.validate(), Err(SynthError::Config(_))));

        let mut spec = two_domain_spec(0.5);
        spec.domains.clear();
        assert!(matches!(spec.validate(), Err(SynthError::Config(_))));
    }

    #[test]
    fn generation_layout_and_sizes() {
        let spec = two_domain_spec(0.5);
        let corpora = generate(&spec).unwrap();
        assert_eq!(corpora.len(), 6);
        assert_eq!(corpora[0].split, Split::Train);
        assert_eq!(corpora[1].split, Split::Dev);
        assert_eq!(corpora[2].split, Split::Test);
        assert_eq!(corpora[0].domain, spec.domains[0].id);
        assert_eq!(corpora[3].domain, spec.domains[1].id);
        assert_eq!(corpora[0].pairs().len(), spec.train_size);
        for pair in corpora[0].pairs() {
            let n = pair.source.split_whitespace().count();
            assert!((spec.min_len..=spec.max_len).contains(&n));
            assert_eq!(pair.target.split_whitespace().count(), n);
        }
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let spec = two_domain_spec(0.37);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn different_seeds_change_the_corpora() {
        let spec = two_domain_spec(0.37);
        let mut reseeded = spec.clone();
        reseeded.seed += 1;
        assert_ne!(generate(&spec).unwrap(), generate(&reseeded).unwrap());
    }

    /// Un-swapping the target (the swap is an involution) must expose a
    /// consistent, injective word-for-word mapping from the source.
    #[test]
    fn target_side_is_a_bijective_substitution_plus_swap() {
        let corpora = generate(&two_domain_spec(0.5)).unwrap();
        let mut mapping: BTreeMap<String, String> = BTreeMap::new();
        for corpus in &corpora {
            for pair in corpus.pairs() {
                let src: Vec<&str> = pair.source.split_whitespace().collect();
                let mut tgt: Vec<&str> = pair.target.split_whitespace().collect();
                swap_adjacent(&mut tgt);
                assert_eq!(src.len(), tgt.len());
                for (s, t) in src.iter().zip(&tgt) {
                    let prev = mapping.insert(s.to_string(), t.to_string());
                    if let Some(prev) = prev {
                        assert_eq!(prev, *t, "word {s} translated inconsistently");
                    }
                }
            }
        }
        let distinct_targets: BTreeSet<&String> = mapping.values().collect();
        assert_eq!(
            distinct_targets.len(),
            mapping.len(),
            "two source words share a target word"
        );
    }

    #[test]
    fn full_overlap_measures_near_zero_divergence() {
        assert!(train_jsd(1.0) < 0.05);
    }

    #[test]
    fn zero_overlap_measures_near_total_divergence() {
        assert!(train_jsd(0.0) > 0.9);
    }

    #[test]
    fn divergence_is_non_increasing_in_overlap() {
        let sweep = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let jsds: Vec<f64> = sweep.iter().map(|&o| train_jsd(o)).collect();
        for window in jsds.windows(2) {
            assert!(
                window[1] <= window[0] + 1e-9,
                "divergence rose along the overlap sweep: {jsds:?}"
            );
        }
    }

    #[test]
    fn calibration_hits_boundary_and_midrange_targets() {
        let template = two_domain_spec(0.5);
        let low = calibrate_overlap(0.0, &template).unwrap();
        assert!(low > 0.9, "near-zero divergence needs high overlap, got {low}");
        let high = calibrate_overlap(1.0, &template).unwrap();
        assert!(high < 0.1, "total divergence needs low overlap, got {high}");
        for target in [0.25, 0.47, 0.6] {
            let overlap = calibrate_overlap(target, &template).unwrap();
            let mut spec = template.clone();
            for dom in &mut spec.domains {
                dom.overlap = overlap;
            }
            let corpora = generate(&spec).unwrap();
            let measured = corpus_jsd(
                &corpora[0],
                &corpora[3],
                SidePolicy::Both,
                &Stopwords::default(),
            )
            .unwrap();
            assert!(
                (measured - target).abs() <= CALIBRATION_TOLERANCE,
                "target {target}: overlap {overlap} re-measures to {measured}"
            );
        }
    }

    #[test]
    fn calibration_rejects_unreachable_targets() {
        let mut template = two_domain_spec(0.5);
        // A tiny vocabulary makes the top of the divergence curve coarse:
        // sharing even the single most frequent rank drops divergence far
        // below 1, leaving high targets unreachable.
        for dom in &mut template.domains {
            dom.vocab_size = 3;
        }
        let err = calibrate_overlap(0.93, &template).unwrap_err();
        match err {
            SynthError::UnreachableTarget { target, min, max } => {
                assert_eq!(target, 0.93);
                assert!(min < max);
            }
            other => panic!("expected an unreachable-target error, got {other}"),
        }
    }
}
