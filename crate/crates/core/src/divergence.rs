//! Jensen–Shannon divergence between corpora.
//!
//! Pipeline: normalize and tokenize each side (times → `<TIME>`, numerals →
//! `<NUMBER>`, stopwords removed, lowercased), build token frequency
//! distributions, then JSD(P||Q) = ½KL(P||M) + ½KL(Q||M) with M = ½P + ½Q,
//! log base 2 so values lie in [0,1]. KL terms are only ever taken against
//! M, which is positive on the union support, so no smoothing is needed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::corpus::{DomainId, ParallelCorpus, Split};

#[derive(Debug, Error)]
pub enum DivergenceError {
    #[error("cannot build a frequency distribution from empty token streams")]
    EmptyDistribution,
    #[error("frequency weights must be finite and positive (got {0})")]
    BadWeight(f64),
    #[error("corpus {0} normalizes to an empty token stream; divergence is undefined")]
    EmptyCorpus(String),
    #[error("divergence matrix needs at least 2 corpora, got {0}")]
    TooFewCorpora(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered list of normalized tokens from one text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream {
    tokens: Vec<String>,
}

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Literal token substituted for clock-time expressions.
pub const TIME_TOKEN: &str = "<TIME>";
/// Literal token substituted for numerals.
pub const NUMBER_TOKEN: &str = "<NUMBER>";

fn token_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // Alternation order matters (leftmost-first): clock forms would
        // otherwise be split by the bare-numeral branch.
        Regex::new(r"(?P<time>\d{1,2}:\d{2}(?::\d{2})?)|(?P<number>\d+(?:[.,]\d+)*)|(?P<word>\p{L}+(?:'\p{L}+)*)")
            .expect("token pattern is valid")
    })
}

/// Lowercases, tokenizes on non-word characters, rewrites times to `<TIME>`
/// and numerals to `<NUMBER>`, and drops stopwords. The marker tokens are
/// never treated as stopwords. Empty output is permitted.
pub fn normalize_tokenize(text: &str, stopwords: &BTreeSet<String>) -> TokenStream {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for caps in token_pattern().captures_iter(&lowered) {
        if caps.name("time").is_some() {
            tokens.push(TIME_TOKEN.to_string());
        } else if caps.name("number").is_some() {
            tokens.push(NUMBER_TOKEN.to_string());
        } else if let Some(word) = caps.name("word") {
            if !stopwords.contains(word.as_str()) {
                tokens.push(word.as_str().to_string());
            }
        }
    }
    TokenStream { tokens }
}

/// Loads a stopword list: one token per line, UTF-8, blank lines ignored.
/// Entries are lowercased to match the tokenizer's output.
pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>, DivergenceError> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Normalized token frequency distribution. Probabilities are strictly
/// positive over the support and sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqDist {
    probs: BTreeMap<String, f64>,
}

impl FreqDist {
    /// Probability of `token`; 0 outside the support.
    pub fn prob(&self, token: &str) -> f64 {
        self.probs.get(token).copied().unwrap_or(0.0)
    }

    /// Tokens with positive probability, in sorted order.
    pub fn support(&self) -> impl Iterator<Item = &str> {
        self.probs.keys().map(String::as_str)
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    /// Sorted (token, probability) view; iteration order is deterministic.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.probs.iter().map(|(t, &p)| (t.as_str(), p))
    }

    /// Builds a distribution from positive weights (need not sum to 1).
    pub fn from_weights(weights: BTreeMap<String, f64>) -> Result<FreqDist, DivergenceError> {
        if weights.is_empty() {
            return Err(DivergenceError::EmptyDistribution);
        }
        let mut total = 0.0;
        for &w in weights.values() {
            if !w.is_finite() || w <= 0.0 {
                return Err(DivergenceError::BadWeight(w));
            }
            total += w;
        }
        let probs = weights.into_iter().map(|(t, w)| (t, w / total)).collect();
        Ok(FreqDist { probs })
    }
}

/// Counts tokens across all streams and normalizes. Errors if every stream
/// is empty.
pub fn freq_dist(streams: &[TokenStream]) -> Result<FreqDist, DivergenceError> {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for stream in streams {
        for token in &stream.tokens {
            *counts.entry(token.clone()).or_insert(0.0) += 1.0;
        }
    }
    FreqDist::from_weights(counts).map_err(|_| DivergenceError::EmptyDistribution)
}

/// Jensen–Shannon divergence in bits, clamped to [0,1] against floating-point
/// drift. Symmetric; 0 iff the distributions coincide; 1 on disjoint supports.
///
/// Terms are accumulated over the sorted union support with both KL
/// contributions added per token, so jsd(p,q) and jsd(q,p) are
/// bitwise-identical.
pub fn jsd(p: &FreqDist, q: &FreqDist) -> f64 {
    let mut acc = 0.0;
    let mut pit = p.iter().peekable();
    let mut qit = q.iter().peekable();
    loop {
        let (pi, qi) = match (pit.peek(), qit.peek()) {
            (None, None) => break,
            (Some(_), None) => (pit.next().map(|(_, v)| v).unwrap(), 0.0),
            (None, Some(_)) => (0.0, qit.next().map(|(_, v)| v).unwrap()),
            (Some(&(tp, _)), Some(&(tq, _))) => match tp.cmp(tq) {
                std::cmp::Ordering::Less => (pit.next().map(|(_, v)| v).unwrap(), 0.0),
                std::cmp::Ordering::Greater => (0.0, qit.next().map(|(_, v)| v).unwrap()),
                std::cmp::Ordering::Equal => (
                    pit.next().map(|(_, v)| v).unwrap(),
                    qit.next().map(|(_, v)| v).unwrap(),
                ),
            },
        };
        let mi = 0.5 * (pi + qi);
        let p_term = if pi > 0.0 { 0.5 * pi * (pi / mi).log2() } else { 0.0 };
        let q_term = if qi > 0.0 { 0.5 * qi * (qi / mi).log2() } else { 0.0 };
        acc += p_term + q_term;
    }
    acc.clamp(0.0, 1.0)
}

/// Which language side(s) of a parallel corpus enter the divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SidePolicy {
    Source,
    Target,
    /// JSD per side, then the mean of the two — the symmetric default.
    #[default]
    Both,
}

impl std::str::FromStr for SidePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "source" | "src" => Ok(SidePolicy::Source),
            "target" | "tgt" => Ok(SidePolicy::Target),
            "both" => Ok(SidePolicy::Both),
            other => Err(format!("unknown side policy {other:?}: expected source, target, or both")),
        }
    }
}

/// Per-side stopword lists. Empty lists are valid.
#[derive(Debug, Clone, Default)]
pub struct Stopwords {
    pub source: BTreeSet<String>,
    pub target: BTreeSet<String>,
}

/// Symmetric pairwise JSD matrix over a set of corpora.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceMatrix {
    pub labels: Vec<(DomainId, Split)>,
    pub values: Vec<Vec<f64>>,
}

impl DivergenceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

fn corpus_dist(
    corpus: &ParallelCorpus,
    side: SidePolicy,
    stopwords: &Stopwords,
) -> Result<FreqDist, DivergenceError> {
    let (list, pick): (&BTreeSet<String>, fn(&crate::corpus::SentencePair) -> &str) = match side {
        SidePolicy::Source => (&stopwords.source, |p| p.source.as_str()),
        SidePolicy::Target => (&stopwords.target, |p| p.target.as_str()),
        SidePolicy::Both => unreachable!("corpus_dist is called per concrete side"),
    };
    let streams: Vec<TokenStream> = corpus
        .pairs()
        .iter()
        .map(|pair| normalize_tokenize(pick(pair), list))
        .collect();
    freq_dist(&streams)
        .map_err(|_| DivergenceError::EmptyCorpus(format!("{}/{}", corpus.domain, corpus.split)))
}

/// Pairwise JSD between corpora under one side policy. All pairs are
/// computed in a fixed order, so the result is bitwise-deterministic.
pub fn divergence_matrix(
    corpora: &[&ParallelCorpus],
    side: SidePolicy,
    stopwords: &Stopwords,
) -> Result<DivergenceMatrix, DivergenceError> {
    if corpora.len() < 2 {
        return Err(DivergenceError::TooFewCorpora(corpora.len()));
    }
    let sides: Vec<SidePolicy> = match side {
        SidePolicy::Both => vec![SidePolicy::Source, SidePolicy::Target],
        one => vec![one],
    };
    // Distributions per corpus per side, built once.
    let mut dists: Vec<Vec<FreqDist>> = Vec::with_capacity(corpora.len());
    for corpus in corpora {
        let per_side = sides
            .iter()
            .map(|&s| corpus_dist(corpus, s, stopwords))
            .collect::<Result<Vec<_>, _>>()?;
        dists.push(per_side);
    }
    let n = corpora.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mean = dists[i]
                .iter()
                .zip(&dists[j])
                .map(|(a, b)| jsd(a, b))
                .sum::<f64>()
                / sides.len() as f64;
            values[i][j] = mean;
            values[j][i] = mean;
        }
    }
    Ok(DivergenceMatrix {
        labels: corpora
            .iter()
            .map(|c| (c.domain.clone(), c.split))
            .collect(),
        values,
    })
}

/// JSD between two corpora under one side policy — the matrix entry without
/// building the matrix.
pub fn corpus_jsd(
    a: &ParallelCorpus,
    b: &ParallelCorpus,
    side: SidePolicy,
    stopwords: &Stopwords,
) -> Result<f64, DivergenceError> {
    let sides: Vec<SidePolicy> = match side {
        SidePolicy::Both => vec![SidePolicy::Source, SidePolicy::Target],
        one => vec![one],
    };
    let mut acc = 0.0;
    for &s in &sides {
        let da = corpus_dist(a, s, stopwords)?;
        let db = corpus_dist(b, s, stopwords)?;
        acc += jsd(&da, &db);
    }
    Ok(acc / sides.len() as f64)
}
