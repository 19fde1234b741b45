//! Multi-domain training mixtures: seeded per-domain sampling, balanced
//! random oversampling, and a global shuffle.
//!
//! A [`DatasetSpec`] names which domains contribute how many pairs; [`mix`]
//! resolves it against loaded corpora into one shuffled [`MixedDataset`]
//! whose per-domain counts match the spec exactly.

use rand::seq::index::sample as index_sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, DomainId, ParallelCorpus, SentencePair};
use crate::seeding::rng_for;

#[derive(Debug, Error)]
pub enum MixError {
    #[error("dataset spec has no components")]
    NoComponents,
    #[error("component {0} requests 0 pairs")]
    ZeroSize(DomainId),
    #[error("domain {0} appears in more than one component")]
    DuplicateDomain(DomainId),
    #[error("no loaded corpus for domain {0}")]
    UnresolvedDomain(DomainId),
    #[error("more than one loaded corpus for domain {0}")]
    AmbiguousDomain(DomainId),
    #[error("component {domain} requests {requested} pairs but the corpus has {available} and the upsample flag is not set")]
    SizeOverflow {
        domain: DomainId,
        requested: usize,
        available: usize,
    },
    #[error("upsample target {target} is below the corpus size {len}; use sampling instead")]
    UpsampleBelowSize { target: usize, len: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// One mixture component: take `size` pairs from `domain`, oversampling if
/// the corpus is smaller and `upsample` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixComponent {
    pub domain: DomainId,
    pub size: usize,
    #[serde(default)]
    pub upsample: bool,
}

/// A validated recipe for a training mixture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    components: Vec<MixComponent>,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(components: Vec<MixComponent>, seed: u64) -> Result<Self, MixError> {
        if components.is_empty() {
            return Err(MixError::NoComponents);
        }
        for (i, c) in components.iter().enumerate() {
            if c.size == 0 {
                return Err(MixError::ZeroSize(c.domain.clone()));
            }
            if components[..i].iter().any(|prev| prev.domain == c.domain) {
                return Err(MixError::DuplicateDomain(c.domain.clone()));
            }
        }
        Ok(DatasetSpec { components, seed })
    }

    /// Single-domain spec — the degenerate mixture.
    pub fn single(domain: DomainId, size: usize, upsample: bool, seed: u64) -> Result<Self, MixError> {
        DatasetSpec::new(vec![MixComponent { domain, size, upsample }], seed)
    }

    pub fn components(&self) -> &[MixComponent] {
        &self.components
    }

    pub fn total_size(&self) -> usize {
        self.components.iter().map(|c| c.size).sum()
    }

    pub fn contains_domain(&self, domain: &DomainId) -> bool {
        self.components.iter().any(|c| &c.domain == domain)
    }
}

/// A realized mixture: origin-tagged pairs in shuffled order.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDataset {
    pairs: Vec<(SentencePair, DomainId)>,
    pub spec: DatasetSpec,
}

impl MixedDataset {
    pub fn pairs(&self) -> &[(SentencePair, DomainId)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pair count per origin domain, in component order.
    pub fn domain_counts(&self) -> Vec<(DomainId, usize)> {
        self.spec
            .components()
            .iter()
            .map(|c| {
                let n = self.pairs.iter().filter(|(_, d)| d == &c.domain).count();
                (c.domain.clone(), n)
            })
            .collect()
    }
}

/// Balanced random oversampling to `target` pairs: every original pair
/// appears floor(target/n) or ceil(target/n) times, the remainder chosen by
/// a seeded draw without replacement, and the result is shuffled.
pub fn upsample(corpus: &ParallelCorpus, target: usize, seed: u64) -> Result<ParallelCorpus, MixError> {
    let n = corpus.len();
    if target < n {
        return Err(MixError::UpsampleBelowSize { target, len: n });
    }
    let base = target / n;
    let remainder = target % n;
    let mut pairs: Vec<SentencePair> = Vec::with_capacity(target);
    for _ in 0..base {
        pairs.extend(corpus.pairs().iter().cloned());
    }
    let mut rng = rng_for(seed, "upsample.remainder");
    if remainder > 0 {
        let extra = index_sample(&mut rng, n, remainder);
        pairs.extend(extra.iter().map(|i| corpus.pairs()[i].clone()));
    }
    let mut shuffle_rng = rng_for(seed, "upsample.shuffle");
    pairs.shuffle(&mut shuffle_rng);
    for (i, p) in pairs.iter_mut().enumerate() {
        p.index = i;
    }
    Ok(ParallelCorpus::from_lines(
        corpus.domain.clone(),
        corpus.lang.clone(),
        corpus.split,
        pairs.into_iter().map(|p| (p.source, p.target)),
    )?
    .corpus)
}

fn resolve<'a>(
    corpora: &[&'a ParallelCorpus],
    domain: &DomainId,
) -> Result<&'a ParallelCorpus, MixError> {
    let mut matches = corpora.iter().filter(|c| &c.domain == domain);
    let found = matches.next().ok_or_else(|| MixError::UnresolvedDomain(domain.clone()))?;
    if matches.next().is_some() {
        return Err(MixError::AmbiguousDomain(domain.clone()));
    }
    Ok(found)
}

/// Resolves a spec against loaded corpora: per-component seeded sample (or
/// upsample), concatenation with origin tags, then one seeded global
/// shuffle. Deterministic for a fixed spec.
pub fn mix(corpora: &[&ParallelCorpus], spec: &DatasetSpec) -> Result<MixedDataset, MixError> {
    let mut pairs: Vec<(SentencePair, DomainId)> = Vec::with_capacity(spec.total_size());
    for component in spec.components() {
        let corpus = resolve(corpora, &component.domain)?;
        let taken = if component.size <= corpus.len() {
            corpus.sample(component.size, spec.seed)?
        } else if component.upsample {
            upsample(corpus, component.size, spec.seed)?
        } else {
            return Err(MixError::SizeOverflow {
                domain: component.domain.clone(),
                requested: component.size,
                available: corpus.len(),
            });
        };
        pairs.extend(
            taken
                .pairs()
                .iter()
                .map(|p| (p.clone(), component.domain.clone())),
        );
    }
    let mut rng = rng_for(spec.seed, "mix.shuffle");
    pairs.shuffle(&mut rng);
    for (i, (p, _)) in pairs.iter_mut().enumerate() {
        p.index = i;
    }
    Ok(MixedDataset {
        pairs,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LangPair, Split};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn corpus(domain: &str, n: usize) -> ParallelCorpus {
        let lines = (0..n).map(|i| (format!("{domain} src {i}"), format!("{domain} tgt {i}")));
        ParallelCorpus::from_lines(
            DomainId::new(domain).unwrap(),
            LangPair::new("en", "si").unwrap(),
            Split::Train,
            lines,
        )
        .unwrap()
        .corpus
    }

    fn spec(entries: &[(&str, usize, bool)], seed: u64) -> DatasetSpec {
        DatasetSpec::new(
            entries
                .iter()
                .map(|(d, s, u)| MixComponent {
                    domain: DomainId::new(d).unwrap(),
                    size: *s,
                    upsample: *u,
                })
                .collect(),
            seed,
        )
        .unwrap()
    }

    fn occurrence_counts(c: &ParallelCorpus) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for p in c.pairs() {
            *counts.entry(p.source.clone()).or_insert(0) += 1;
        }
        counts
    }

    #[test]
    fn spec_rejects_bad_shapes() {
        assert!(matches!(DatasetSpec::new(vec![], 1), Err(MixError::NoComponents)));
        assert!(matches!(
            spec_result(&[("cc", 0, false)]),
            Err(MixError::ZeroSize(_))
        ));
        assert!(matches!(
            spec_result(&[("cc", 5, false), ("cc", 5, false)]),
            Err(MixError::DuplicateDomain(_))
        ));
    }

    fn spec_result(entries: &[(&str, usize, bool)]) -> Result<DatasetSpec, MixError> {
        DatasetSpec::new(
            entries
                .iter()
                .map(|(d, s, u)| MixComponent {
                    domain: DomainId::new(d).unwrap(),
                    size: *s,
                    upsample: *u,
                })
                .collect(),
            1,
        )
    }

    #[test]
    fn mix_conserves_per_domain_counts() {
        let cc = corpus("cc", 3000);
        let bible = corpus("bible", 3000);
        let mixed = mix(&[&cc, &bible], &spec(&[("cc", 1000, false), ("bible", 1000, false)], 222)).unwrap();
        assert_eq!(mixed.len(), 2000);
        let counts = mixed.domain_counts();
        assert_eq!(counts[0], (DomainId::new("cc").unwrap(), 1000));
        assert_eq!(counts[1], (DomainId::new("bible").unwrap(), 1000));
    }

    #[test]
    fn single_component_mix_degenerates_to_sample() {
        let pmi = corpus("pmi", 4000);
        let mixed = mix(&[&pmi], &spec(&[("pmi", 1000, false)], 222)).unwrap();
        let sampled = pmi.sample(1000, 222).unwrap();
        let mut mix_sources: Vec<&str> = mixed.pairs().iter().map(|(p, _)| p.source.as_str()).collect();
        let mut sample_sources: Vec<&str> = sampled.pairs().iter().map(|p| p.source.as_str()).collect();
        mix_sources.sort();
        sample_sources.sort();
        assert_eq!(mix_sources, sample_sources);
    }

    #[test]
    fn three_domain_large_mixture() {
        let cc = corpus("cc", 25_000);
        let bible = corpus("bible", 25_000);
        let gvt = corpus("gvt", 25_000);
        let mixed = mix(
            &[&cc, &bible, &gvt],
            &spec(&[("cc", 25_000, false), ("bible", 25_000, false), ("gvt", 25_000, false)], 222),
        )
        .unwrap();
        assert_eq!(mixed.len(), 75_000);
        for (_, n) in mixed.domain_counts() {
            assert_eq!(n, 25_000);
        }
    }

    #[test]
    fn mix_is_deterministic() {
        let cc = corpus("cc", 500);
        let bible = corpus("bible", 800);
        let s = spec(&[("cc", 200, false), ("bible", 300, false)], 9);
        assert_eq!(mix(&[&cc, &bible], &s).unwrap(), mix(&[&cc, &bible], &s).unwrap());
    }

    #[test]
    fn mix_multiset_equals_component_samples() {
        let cc = corpus("cc", 500);
        let bible = corpus("bible", 800);
        let s = spec(&[("cc", 200, false), ("bible", 300, false)], 77);
        let mixed = mix(&[&cc, &bible], &s).unwrap();
        let mut expected: Vec<String> = cc
            .sample(200, 77)
            .unwrap()
            .pairs()
            .iter()
            .chain(bible.sample(300, 77).unwrap().pairs().iter())
            .map(|p| p.source.clone())
            .collect();
        let mut got: Vec<String> = mixed.pairs().iter().map(|(p, _)| p.source.clone()).collect();
        expected.sort();
        got.sort();
        assert_eq!(expected, got);
    }

    #[test]
    fn mix_errors_name_the_domain() {
        let cc = corpus("cc", 100);
        let err = mix(&[&cc], &spec(&[("bible", 10, false)], 1)).unwrap_err();
        assert!(matches!(err, MixError::UnresolvedDomain(d) if d.as_str() == "bible"));
        let err = mix(&[&cc], &spec(&[("cc", 101, false)], 1)).unwrap_err();
        assert!(matches!(
            err,
            MixError::SizeOverflow { requested: 101, available: 100, .. }
        ));
        let dup = corpus("cc", 50);
        let err = mix(&[&cc, &dup], &spec(&[("cc", 10, false)], 1)).unwrap_err();
        assert!(matches!(err, MixError::AmbiguousDomain(_)));
    }

    #[test]
    fn mix_upsamples_when_flagged() {
        let cc = corpus("cc", 100);
        let bible = corpus("bible", 5000);
        let mixed = mix(&[&cc, &bible], &spec(&[("cc", 250, true), ("bible", 250, false)], 3)).unwrap();
        assert_eq!(mixed.len(), 500);
        assert_eq!(mixed.domain_counts()[0].1, 250);
    }

    #[test]
    fn upsample_noop_size_is_permutation() {
        let c = corpus("cc", 40);
        let up = upsample(&c, 40, 5).unwrap();
        let mut orig: Vec<&str> = c.pairs().iter().map(|p| p.source.as_str()).collect();
        let mut got: Vec<&str> = up.pairs().iter().map(|p| p.source.as_str()).collect();
        orig.sort();
        got.sort();
        assert_eq!(orig, got);
    }

    #[test]
    fn upsample_exact_multiple() {
        let c = corpus("cc", 1000);
        let up = upsample(&c, 25_000, 222).unwrap();
        assert_eq!(up.len(), 25_000);
        for (_, count) in occurrence_counts(&up) {
            assert_eq!(count, 25);
        }
    }

    #[test]
    fn upsample_remainder_split() {
        let c = corpus("cc", 1000);
        let up = upsample(&c, 25_500, 222).unwrap();
        assert_eq!(up.len(), 25_500);
        let counts = occurrence_counts(&up);
        let at_26 = counts.values().filter(|&&n| n == 26).count();
        let at_25 = counts.values().filter(|&&n| n == 25).count();
        assert_eq!(at_26, 500);
        assert_eq!(at_25, 500);
        assert_eq!(counts.len(), 1000);
    }

    #[test]
    fn upsample_below_size_errors() {
        let c = corpus("cc", 100);
        assert!(matches!(
            upsample(&c, 99, 1),
            Err(MixError::UpsampleBelowSize { target: 99, len: 100 })
        ));
    }

    proptest! {
        #[test]
        fn upsample_occurrence_bounds(len in 1usize..60, extra in 0usize..200, seed in 0u64..1000) {
            let c = corpus("cc", len);
            let target = len + extra;
            let up = upsample(&c, target, seed).unwrap();
            prop_assert_eq!(up.len(), target);
            let floor = target / len;
            let ceil = target.div_ceil(len);
            let counts = occurrence_counts(&up);
            prop_assert_eq!(counts.len(), len);
            for (_, n) in counts {
                prop_assert!(n == floor || n == ceil, "occurrence {} outside [{}, {}]", n, floor, ceil);
            }
        }
    }
}
