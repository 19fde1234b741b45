//! Multi-domain parallel corpora: loading, validation, splitting, and
//! deterministic sampling.
//!
//! On-disk formats: a pair of line-aligned UTF-8 text files
//! (`<stem>.src.txt` / `<stem>.tgt.txt`) or a single two-column
//! tab-separated file (`<stem>.tsv`). Inside a workspace, corpora live at
//! `corpora/<lang-pair>/<domain>/<split>.*`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::normalize_tokenize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("domain id {0:?} is invalid: must be non-empty lowercase [a-z0-9_-]")]
    InvalidDomain(String),
    #[error("language code {0:?} is invalid: expected 2-3 ASCII letters")]
    InvalidLangCode(String),
    #[error("source and target language codes are both {0:?}")]
    SameLanguage(String),
    #[error("unknown split {0:?}: expected train, dev, or test")]
    InvalidSplit(String),
    #[error("sentence pair {index}: {side} side is empty after trimming")]
    EmptySide { index: usize, side: &'static str },
    #[error("sentence pair {index}: {side} side contains an interior newline")]
    InteriorNewline { index: usize, side: &'static str },
    #[error("aligned files differ in length: {source_lines} source lines vs {target_lines} target lines")]
    Misaligned {
        source_lines: usize,
        target_lines: usize,
    },
    #[error("{path}: line {line} is not valid UTF-8")]
    Encoding { path: PathBuf, line: usize },
    #[error("{path}: line {line} has {columns} tab-separated columns, expected 2")]
    BadTsvRow {
        path: PathBuf,
        line: usize,
        columns: usize,
    },
    #[error("corpus {0} has no usable sentence pairs")]
    Empty(String),
    #[error("requested sample of {requested} from a corpus of {available} pairs (use upsample to exceed the corpus size)")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("sample size must be at least 1")]
    SampleEmpty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Short identifier for a data domain (e.g. "bible", "gvt", "cc").
///
/// Comparison is case-insensitive; ids are normalized to lowercase on
/// construction so they can double as directory names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainId(String);

impl DomainId {
    pub fn new(name: &str) -> Result<Self, CorpusError> {
        let normalized = name.trim().to_lowercase();
        let ok = !normalized.is_empty()
            && normalized
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-');
        if !ok {
            return Err(CorpusError::InvalidDomain(name.to_string()));
        }
        Ok(DomainId(normalized))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for DomainId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DomainId::new(s)
    }
}

/// An ordered language pair, ISO 639-1/3 codes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LangPair {
    pub source: String,
    pub target: String,
}

impl LangPair {
    pub fn new(source: &str, target: &str) -> Result<Self, CorpusError> {
        let source = Self::check_code(source)?;
        let target = Self::check_code(target)?;
        if source == target {
            return Err(CorpusError::SameLanguage(source));
        }
        Ok(LangPair { source, target })
    }

    fn check_code(code: &str) -> Result<String, CorpusError> {
        let c = code.trim().to_lowercase();
        if (c.len() == 2 || c.len() == 3) && c.chars().all(|ch| ch.is_ascii_lowercase()) {
            Ok(c)
        } else {
            Err(CorpusError::InvalidLangCode(code.to_string()))
        }
    }

    /// Directory name inside a workspace, e.g. "en-si".
    pub fn dir_name(&self) -> String {
        format!("{}-{}", self.source, self.target)
    }
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

impl std::str::FromStr for LangPair {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (src, tgt) = s
            .split_once('-')
            .ok_or_else(|| CorpusError::InvalidLangCode(s.to_string()))?;
        LangPair::new(src, tgt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::InvalidSplit(other.to_string())),
        }
    }
}

/// One aligned sentence pair. Both sides are trimmed, non-empty, and free of
/// interior newlines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: String,
    pub target: String,
    pub index: usize,
}

impl SentencePair {
    pub fn new(source: &str, target: &str, index: usize) -> Result<Self, CorpusError> {
        let source = source.trim();
        let target = target.trim();
        if source.is_empty() {
            return Err(CorpusError::EmptySide { index, side: "source" });
        }
        if target.is_empty() {
            return Err(CorpusError::EmptySide { index, side: "target" });
        }
        if source.contains('\n') || source.contains('\r') {
            return Err(CorpusError::InteriorNewline { index, side: "source" });
        }
        if target.contains('\n') || target.contains('\r') {
            return Err(CorpusError::InteriorNewline { index, side: "target" });
        }
        Ok(SentencePair {
            source: source.to_string(),
            target: target.to_string(),
            index,
        })
    }
}

/// A domain- and language-pair-tagged list of aligned sentence pairs, all
/// belonging to a single split. Pair indices are dense 0..n-1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelCorpus {
    pub domain: DomainId,
    pub lang: LangPair,
    pub split: Split,
    pairs: Vec<SentencePair>,
}

/// Outcome of a load: the corpus plus how many blank-sided lines were dropped.
#[derive(Debug)]
pub struct LoadReport {
    pub corpus: ParallelCorpus,
    pub dropped: usize,
}

/// Token/type counts for one corpus, computed with the divergence tokenizer
/// (no stopword removal) so they line up with what JSD sees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStats {
    pub pairs: usize,
    pub source_tokens: usize,
    pub target_tokens: usize,
    pub source_types: usize,
    pub target_types: usize,
}

impl ParallelCorpus {
    /// Builds a corpus from raw line pairs, dropping pairs that are blank on
    /// either side and re-indexing densely.
    pub fn from_lines(
        domain: DomainId,
        lang: LangPair,
        split: Split,
        lines: impl IntoIterator<Item = (String, String)>,
    ) -> Result<LoadReport, CorpusError> {
        let mut pairs = Vec::new();
        let mut dropped = 0usize;
        for (src, tgt) in lines {
            if src.trim().is_empty() || tgt.trim().is_empty() {
                dropped += 1;
                continue;
            }
            pairs.push(SentencePair::new(&src, &tgt, pairs.len())?);
        }
        if pairs.is_empty() {
            return Err(CorpusError::Empty(format!("{}/{}", domain, split)));
        }
        Ok(LoadReport {
            corpus: ParallelCorpus {
                domain,
                lang,
                split,
                pairs,
            },
            dropped,
        })
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Uniform sample of `n` pairs without replacement, re-indexed densely.
    /// Deterministic for a fixed (corpus, n, seed).
    pub fn sample(&self, n: usize, seed: u64) -> Result<ParallelCorpus, CorpusError> {
        if n == 0 {
            return Err(CorpusError::SampleEmpty);
        }
        if n > self.pairs.len() {
            return Err(CorpusError::SampleTooLarge {
                requested: n,
                available: self.pairs.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chosen = index_sample(&mut rng, self.pairs.len(), n);
        let pairs = chosen
            .iter()
            .enumerate()
            .map(|(new_index, old_index)| SentencePair {
                index: new_index,
                ..self.pairs[old_index].clone()
            })
            .collect();
        Ok(ParallelCorpus {
            domain: self.domain.clone(),
            lang: self.lang.clone(),
            split: self.split,
            pairs,
        })
    }

    /// Pair, token, and type counts per side.
    pub fn stats(&self) -> CorpusStats {
        let empty = BTreeSet::new();
        let mut source_tokens = 0usize;
        let mut target_tokens = 0usize;
        let mut source_types: BTreeSet<String> = BTreeSet::new();
        let mut target_types: BTreeSet<String> = BTreeSet::new();
        for pair in &self.pairs {
            let src = normalize_tokenize(&pair.source, &empty);
            let tgt = normalize_tokenize(&pair.target, &empty);
            source_tokens += src.tokens().len();
            target_tokens += tgt.tokens().len();
            source_types.extend(src.tokens().iter().cloned());
            target_types.extend(tgt.tokens().iter().cloned());
        }
        CorpusStats {
            pairs: self.pairs.len(),
            source_tokens,
            target_tokens,
            source_types: source_types.len(),
            target_types: target_types.len(),
        }
    }

    /// Writes the corpus as a line-aligned `<stem>.src.txt` / `<stem>.tgt.txt`
    /// pair. Inverse of [`load_parallel`] up to blank-line dropping.
    pub fn save(&self, stem: &Path) -> Result<(PathBuf, PathBuf), CorpusError> {
        if let Some(parent) = stem.parent() {
            fs::create_dir_all(parent)?;
        }
        let src_path = stem.with_extension("src.txt");
        let tgt_path = stem.with_extension("tgt.txt");
        let mut src = fs::File::create(&src_path)?;
        let mut tgt = fs::File::create(&tgt_path)?;
        for pair in &self.pairs {
            writeln!(src, "{}", pair.source)?;
            writeln!(tgt, "{}", pair.target)?;
        }
        Ok((src_path, tgt_path))
    }
}

fn read_utf8_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let bytes = fs::read(path)?;
    let mut lines = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| CorpusError::Encoding {
            path: path.to_path_buf(),
            line: i + 1,
        })?;
        lines.push(line.to_string());
    }
    // A trailing newline produces one empty final entry; it is not a data line.
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    Ok(lines)
}

/// Loads a corpus from two line-aligned text files. Line i of each file
/// becomes pair i; pairs blank on either side are dropped and counted.
pub fn load_parallel(
    source_path: &Path,
    target_path: &Path,
    domain: DomainId,
    lang: LangPair,
    split: Split,
) -> Result<LoadReport, CorpusError> {
    let src_lines = read_utf8_lines(source_path)?;
    let tgt_lines = read_utf8_lines(target_path)?;
    if src_lines.len() != tgt_lines.len() {
        return Err(CorpusError::Misaligned {
            source_lines: src_lines.len(),
            target_lines: tgt_lines.len(),
        });
    }
    ParallelCorpus::from_lines(domain, lang, split, src_lines.into_iter().zip(tgt_lines))
}

/// Loads a corpus from a single two-column tab-separated file (no header).
pub fn load_tsv(
    path: &Path,
    domain: DomainId,
    lang: LangPair,
    split: Split,
) -> Result<LoadReport, CorpusError> {
    let lines = read_utf8_lines(path)?;
    let mut rows = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            // Fully blank row: treat as a droppable pair, not a format error.
            rows.push((String::new(), String::new()));
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(CorpusError::BadTsvRow {
                path: path.to_path_buf(),
                line: i + 1,
                columns: cols.len(),
            });
        }
        rows.push((cols[0].to_string(), cols[1].to_string()));
    }
    ParallelCorpus::from_lines(domain, lang, split, rows)
}

/// Directory for one domain inside a workspace:
/// `<root>/corpora/<lang-pair>/<domain>`.
pub fn domain_dir(workspace: &Path, lang: &LangPair, domain: &DomainId) -> PathBuf {
    workspace
        .join("corpora")
        .join(lang.dir_name())
        .join(domain.as_str())
}

/// Loads `<split>` of one domain from a workspace, preferring the two-file
/// form over `<split>.tsv`.
pub fn load_from_workspace(
    workspace: &Path,
    lang: &LangPair,
    domain: &DomainId,
    split: Split,
) -> Result<LoadReport, CorpusError> {
    let dir = domain_dir(workspace, lang, domain);
    let src = dir.join(format!("{split}.src.txt"));
    let tgt = dir.join(format!("{split}.tgt.txt"));
    if src.exists() && tgt.exists() {
        return load_parallel(&src, &tgt, domain.clone(), lang.clone(), split);
    }
    let tsv = dir.join(format!("{split}.tsv"));
    load_tsv(&tsv, domain.clone(), lang.clone(), split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize) -> ParallelCorpus {
        let lines = (0..n).map(|i| (format!("src {i}"), format!("tgt {i}")));
        ParallelCorpus::from_lines(
            DomainId::new("cc").unwrap(),
            LangPair::new("en", "si").unwrap(),
            Split::Train,
            lines,
        )
        .unwrap()
        .corpus
    }

    #[test]
    fn domain_id_is_case_insensitive() {
        assert_eq!(DomainId::new("Bible").unwrap(), DomainId::new("bible").unwrap());
        assert!(DomainId::new("").is_err());
        assert!(DomainId::new("no spaces").is_err());
    }

    #[test]
    fn lang_pair_rejects_identical_codes() {
        assert!(LangPair::new("en", "en").is_err());
        assert!(LangPair::new("en", "EN").is_err());
        assert!(LangPair::new("english", "si").is_err());
        let lp: LangPair = "en-si".parse().unwrap();
        assert_eq!(lp.dir_name(), "en-si");
    }

    #[test]
    fn load_identity_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("a.src.txt");
        let tgt = dir.path().join("a.tgt.txt");
        fs::write(&src, "one\ntwo\nthree\n").unwrap();
        fs::write(&tgt, "eins\nzwei\ndrei\n").unwrap();
        let report = load_parallel(
            &src,
            &tgt,
            DomainId::new("cc").unwrap(),
            LangPair::new("en", "de").unwrap(),
            Split::Train,
        )
        .unwrap();
        assert_eq!(report.dropped, 0);
        assert_eq!(report.corpus.len(), 3);
        let idx: Vec<usize> = report.corpus.pairs().iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn load_drops_blank_sided_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("b.src.txt");
        let tgt = dir.path().join("b.tgt.txt");
        fs::write(&src, "a\nb\n   \nd\ne\n").unwrap();
        fs::write(&tgt, "1\n2\n3\n4\n5\n").unwrap();
        let report = load_parallel(
            &src,
            &tgt,
            DomainId::new("cc").unwrap(),
            LangPair::new("en", "de").unwrap(),
            Split::Train,
        )
        .unwrap();
        assert_eq!(report.dropped, 1);
        assert_eq!(report.corpus.len(), 4);
        assert_eq!(report.corpus.pairs()[2].source, "d");
        assert_eq!(report.corpus.pairs()[2].index, 2);
    }

    #[test]
    fn load_rejects_misaligned_files() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("c.src.txt");
        let tgt = dir.path().join("c.tgt.txt");
        fs::write(&src, "a\nb\nc\n").unwrap();
        fs::write(&tgt, "1\n2\n").unwrap();
        let err = load_parallel(
            &src,
            &tgt,
            DomainId::new("cc").unwrap(),
            LangPair::new("en", "de").unwrap(),
            Split::Train,
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::Misaligned { source_lines: 3, target_lines: 2 }));
    }

    #[test]
    fn load_reports_encoding_error_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("d.src.txt");
        let tgt = dir.path().join("d.tgt.txt");
        fs::write(&src, [b'o', b'k', b'\n', 0xFF, 0xFE, b'\n']).unwrap();
        fs::write(&tgt, "1\n2\n").unwrap();
        let err = load_parallel(
            &src,
            &tgt,
            DomainId::new("cc").unwrap(),
            LangPair::new("en", "de").unwrap(),
            Split::Train,
        )
        .unwrap_err();
        match err {
            CorpusError::Encoding { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_25k_lines() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("e.src.txt");
        let tgt = dir.path().join("e.tgt.txt");
        let n = 25_000;
        let mut s = String::new();
        let mut t = String::new();
        for i in 0..n {
            s.push_str(&format!("line {i}\n"));
            t.push_str(&format!("zeile {i}\n"));
        }
        fs::write(&src, s).unwrap();
        fs::write(&tgt, t).unwrap();
        let report = load_parallel(
            &src,
            &tgt,
            DomainId::new("cc").unwrap(),
            LangPair::new("en", "de").unwrap(),
            Split::Train,
        )
        .unwrap();
        assert_eq!(report.corpus.len(), n);
    }

    #[test]
    fn tsv_round_trips_two_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.tsv");
        fs::write(&path, "hello\thallo\nworld\twelt\n").unwrap();
        let report = load_tsv(
            &path,
            DomainId::new("cc").unwrap(),
            LangPair::new("en", "de").unwrap(),
            Split::Dev,
        )
        .unwrap();
        assert_eq!(report.corpus.len(), 2);
        assert_eq!(report.corpus.pairs()[1].target, "welt");
    }

    #[test]
    fn save_load_round_trip_preserves_pairs() {
        let corpus = fixture(37);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("out");
        let (src, tgt) = corpus.save(&stem).unwrap();
        let reloaded = load_parallel(&src, &tgt, corpus.domain.clone(), corpus.lang.clone(), corpus.split)
            .unwrap()
            .corpus;
        assert_eq!(reloaded, corpus);
    }

    #[test]
    fn full_sample_is_a_permutation() {
        let corpus = fixture(50);
        let sampled = corpus.sample(50, 7).unwrap();
        let mut orig: Vec<&str> = corpus.pairs().iter().map(|p| p.source.as_str()).collect();
        let mut got: Vec<&str> = sampled.pairs().iter().map(|p| p.source.as_str()).collect();
        orig.sort();
        got.sort();
        assert_eq!(orig, got);
        let idx: Vec<usize> = sampled.pairs().iter().map(|p| p.index).collect();
        assert_eq!(idx, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn sampling_is_deterministic_under_seed_222() {
        let corpus = fixture(5000);
        let a = corpus.sample(1000, 222).unwrap();
        let b = corpus.sample(1000, 222).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ_and_stay_contained() {
        let corpus = fixture(5000);
        let a = corpus.sample(1000, 222).unwrap();
        let b = corpus.sample(1000, 223).unwrap();
        assert_ne!(a.pairs(), b.pairs());
        // Multiset containment oracle: every sampled sentence exists in the
        // original exactly as often as it was drawn (all fixtures distinct).
        let originals: BTreeSet<&str> = corpus.pairs().iter().map(|p| p.source.as_str()).collect();
        let mut seen = BTreeSet::new();
        for p in b.pairs() {
            assert!(originals.contains(p.source.as_str()));
            assert!(seen.insert(p.source.as_str()), "duplicate draw {:?}", p.source);
        }
    }

    #[test]
    fn sample_larger_than_corpus_errors() {
        let corpus = fixture(10);
        assert!(matches!(
            corpus.sample(11, 1).unwrap_err(),
            CorpusError::SampleTooLarge { requested: 11, available: 10 }
        ));
    }

    #[test]
    fn sample_inclusion_is_uniform() {
        // Chi-square-style check: sampling half of a small corpus many times
        // should include each pair about half the time.
        let corpus = fixture(10);
        let trials = 2000;
        let mut included = vec![0usize; 10];
        for seed in 0..trials {
            let s = corpus.sample(5, seed as u64).unwrap();
            for p in s.pairs() {
                let orig: usize = p.source.strip_prefix("src ").unwrap().parse().unwrap();
                included[orig] += 1;
            }
        }
        for (i, count) in included.iter().enumerate() {
            let freq = *count as f64 / trials as f64;
            assert!(
                (freq - 0.5).abs() < 0.05,
                "pair {i} inclusion frequency {freq} drifts from 0.5"
            );
        }
    }

    #[test]
    fn stats_hand_count() {
        let corpus = ParallelCorpus::from_lines(
            DomainId::new("cc").unwrap(),
            LangPair::new("en", "de").unwrap(),
            Split::Train,
            vec![
                ("a b".to_string(), "x".to_string()),
                ("a".to_string(), "x y".to_string()),
            ],
        )
        .unwrap()
        .corpus;
        let stats = corpus.stats();
        assert_eq!(stats.pairs, 2);
        assert_eq!(stats.source_tokens, 3);
        assert_eq!(stats.target_tokens, 3);
        assert_eq!(stats.source_types, 2);
        assert_eq!(stats.target_types, 2);
    }

    #[test]
    fn stats_invariant_under_full_sample() {
        let corpus = fixture(40);
        let shuffled = corpus.sample(40, 99).unwrap();
        assert_eq!(corpus.stats(), shuffled.stats());
    }

    #[test]
    fn workspace_layout_paths() {
        let lang = LangPair::new("en", "si").unwrap();
        let dom = DomainId::new("bible").unwrap();
        let dir = domain_dir(Path::new("/ws"), &lang, &dom);
        assert_eq!(dir, Path::new("/ws/corpora/en-si/bible"));
    }
}
