//! Byte-pair subword model shared across both languages.
//!
//! Merges are learned over whitespace-split words with an end-of-word marker
//! (`</w>`), so decoding reconstructs word boundaries exactly. Special tokens
//! occupy fixed reserved ids ahead of the learned vocabulary and are never
//! produced by `encode` on raw text.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ParallelCorpus;

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
/// Tag for the language pair's source language.
pub const LANG_SRC_ID: u32 = 5;
/// Tag for the language pair's target language.
pub const LANG_TGT_ID: u32 = 6;

pub const SPECIAL_TOKEN_COUNT: usize = 7;

const SPECIAL_TOKENS: [&str; SPECIAL_TOKEN_COUNT] =
    ["<pad>", "<s>", "</s>", "<unk>", "<mask>", "<lang-src>", "<lang-tgt>"];

/// End-of-word marker symbol used during merge learning.
const WORD_END: &str = "</w>";

#[derive(Debug, Error)]
pub enum SubwordError {
    #[error("vocab size {requested} cannot hold {needed} base symbols (specials + characters + word marker)")]
    VocabTooSmall { requested: usize, needed: usize },
    #[error("cannot train a subword model on empty corpora")]
    EmptyCorpora,
    #[error("token id {0} is outside the vocabulary (size {1})")]
    UnknownId(u32, usize),
}

/// A trained byte-pair subword model: ordered merges plus the id-indexed
/// vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "SubwordModelData", into = "SubwordModelData")]
pub struct SubwordModel {
    merges: Vec<(String, String)>,
    tokens: Vec<String>,
    token_ids: BTreeMap<String, u32>,
}

/// Serialized form: the index is rebuilt on load.
#[derive(Serialize, Deserialize)]
struct SubwordModelData {
    merges: Vec<(String, String)>,
    tokens: Vec<String>,
}

impl From<SubwordModelData> for SubwordModel {
    fn from(data: SubwordModelData) -> Self {
        SubwordModel::from_parts(data.tokens, data.merges)
    }
}

impl From<SubwordModel> for SubwordModelData {
    fn from(model: SubwordModel) -> Self {
        SubwordModelData {
            merges: model.merges,
            tokens: model.tokens,
        }
    }
}

impl SubwordModel {
    fn from_parts(tokens: Vec<String>, merges: Vec<(String, String)>) -> Self {
        let token_ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        SubwordModel {
            merges,
            tokens,
            token_ids,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Token string for an id.
    pub fn token(&self, id: u32) -> Result<&str, SubwordError> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or(SubwordError::UnknownId(id, self.tokens.len()))
    }

    /// Splits a word into learned subword symbols (with `</w>` attached).
    fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        symbols.push(WORD_END.to_string());
        for (a, b) in &self.merges {
            let mut i = 0;
            while i + 1 < symbols.len() {
                if symbols[i] == *a && symbols[i + 1] == *b {
                    symbols[i] = format!("{a}{b}");
                    symbols.remove(i + 1);
                } else {
                    i += 1;
                }
            }
        }
        symbols
    }

    /// Encodes text to content token ids — no framing specials. Unknown
    /// symbols (characters outside the training alphabet) map to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        let mut cache: HashMap<&str, Vec<u32>> = HashMap::new();
        for word in text.split_whitespace() {
            let word_ids = cache.entry(word).or_insert_with(|| {
                self.segment_word(word)
                    .iter()
                    .map(|s| self.token_ids.get(s).copied().unwrap_or(UNK_ID))
                    .collect()
            });
            ids.extend_from_slice(word_ids);
        }
        ids
    }

    /// Decodes ids back to text. Framing specials (pad, sentence marks,
    /// language tags) are dropped; `<unk>` and `<mask>` render literally.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            match id {
                PAD_ID | BOS_ID | EOS_ID | LANG_SRC_ID | LANG_TGT_ID => continue,
                _ => {}
            }
            let token = match self.tokens.get(id as usize) {
                Some(t) => t.as_str(),
                None => SPECIAL_TOKENS[UNK_ID as usize],
            };
            if let Some(stem) = token.strip_suffix(WORD_END) {
                out.push_str(stem);
                out.push(' ');
            } else {
                out.push_str(token);
                // Bare <unk>/<mask> stand for word-internal material; a
                // space would split the word they sit inside.
                if id == UNK_ID || id == MASK_ID {
                    continue;
                }
            }
        }
        out.trim_end().to_string()
    }
}

/// Learns byte-pair merges over both sides of the given corpora.
///
/// Deterministic: pair selection is by count, ties broken by lexicographic
/// pair order. Stops at `vocab_size` tokens or when no mergeable pair
/// remains.
pub fn train_bpe(corpora: &[&ParallelCorpus], vocab_size: usize) -> Result<SubwordModel, SubwordError> {
    // Word frequencies over every side of every corpus.
    let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
    for corpus in corpora {
        for pair in corpus.pairs() {
            for side in [&pair.source, &pair.target] {
                for word in side.split_whitespace() {
                    *word_counts.entry(word.to_string()).or_insert(0) += 1;
                }
            }
        }
    }
    if word_counts.is_empty() {
        return Err(SubwordError::EmptyCorpora);
    }

    // Base alphabet: every character seen, plus the end-of-word marker.
    let mut alphabet: std::collections::BTreeSet<String> = word_counts
        .keys()
        .flat_map(|w| w.chars().map(|c| c.to_string()))
        .collect();
    alphabet.insert(WORD_END.to_string());

    let needed = SPECIAL_TOKEN_COUNT + alphabet.len();
    if vocab_size < needed {
        return Err(SubwordError::VocabTooSmall {
            requested: vocab_size,
            needed,
        });
    }

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(alphabet.iter().cloned());
    let mut known: std::collections::BTreeSet<String> = tokens.iter().cloned().collect();

    // Working segmentation of each word type.
    let mut segmented: Vec<(Vec<String>, u64)> = word_counts
        .into_iter()
        .map(|(word, count)| {
            let mut symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
            symbols.push(WORD_END.to_string());
            (symbols, count)
        })
        .collect();

    let mut merges: Vec<(String, String)> = Vec::new();
    while tokens.len() < vocab_size {
        // Count adjacent pairs across all word types.
        let mut pair_counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (symbols, count) in &segmented {
            for window in symbols.windows(2) {
                *pair_counts
                    .entry((window[0].as_str(), window[1].as_str()))
                    .or_insert(0) += count;
            }
        }
        // Best pair: highest count, then lexicographically smallest; pairs
        // whose concatenation collides with an existing token are skipped so
        // ids stay unique.
        let best = pair_counts
            .iter()
            .filter(|((a, b), _)| !known.contains(&format!("{a}{b}")))
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            .map(|((a, b), _)| (a.to_string(), b.to_string()));
        let Some((a, b)) = best else { break };
        let merged = format!("{a}{b}");
        for (symbols, _) in &mut segmented {
            let mut i = 0;
            while i + 1 < symbols.len() {
                if symbols[i] == a && symbols[i + 1] == b {
                    symbols[i] = merged.clone();
                    symbols.remove(i + 1);
                } else {
                    i += 1;
                }
            }
        }
        known.insert(merged.clone());
        tokens.push(merged);
        merges.push((a, b));
    }

    Ok(SubwordModel::from_parts(tokens, merges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DomainId, LangPair, Split};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus_from(lines: &[(&str, &str)]) -> ParallelCorpus {
        ParallelCorpus::from_lines(
            DomainId::new("cc").unwrap(),
            LangPair::new("en", "si").unwrap(),
            Split::Train,
            lines.iter().map(|(s, t)| (s.to_string(), t.to_string())),
        )
        .unwrap()
        .corpus
    }

    #[test]
    fn special_ids_are_reserved() {
        let c = corpus_from(&[("ab ab", "ba ba")]);
        let model = train_bpe(&[&c], 16).unwrap();
        assert_eq!(model.token(PAD_ID).unwrap(), "<pad>");
        assert_eq!(model.token(BOS_ID).unwrap(), "<s>");
        assert_eq!(model.token(EOS_ID).unwrap(), "</s>");
        assert_eq!(model.token(UNK_ID).unwrap(), "<unk>");
        assert_eq!(model.token(MASK_ID).unwrap(), "<mask>");
        assert_eq!(model.token(LANG_SRC_ID).unwrap(), "<lang-src>");
        assert_eq!(model.token(LANG_TGT_ID).unwrap(), "<lang-tgt>");
    }

    #[test]
    fn alphabet_chars_are_in_vocab() {
        let c = corpus_from(&[("ab ab", "ba ba")]);
        let model = train_bpe(&[&c], 16).unwrap();
        for ch in ["a", "b", "</w>"] {
            assert!(
                model.token_ids.contains_key(ch),
                "missing base symbol {ch:?}"
            );
        }
    }

    #[test]
    fn vocab_too_small_is_rejected() {
        let c = corpus_from(&[("abc", "def")]);
        // needed = 7 specials + 6 chars + marker = 14
        let err = train_bpe(&[&c], 13).unwrap_err();
        assert!(matches!(err, SubwordError::VocabTooSmall { needed: 14, requested: 13 }));
        assert!(train_bpe(&[&c], 14).is_ok());
    }

    #[test]
    fn encode_empty_is_empty() {
        let c = corpus_from(&[("ab", "ba")]);
        let model = train_bpe(&[&c], 16).unwrap();
        assert!(model.encode("").is_empty());
        assert_eq!(model.decode(&[]), "");
    }

    #[test]
    fn frequent_words_become_single_tokens() {
        let c = corpus_from(&[("the cat the cat", "the dog the dog"); 5]);
        let model = train_bpe(&[&c], 64).unwrap();
        assert_eq!(model.encode("the").len(), 1, "merges: {:?}", model.merges());
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let c = corpus_from(&[("ab ab", "ba ba")]);
        let model = train_bpe(&[&c], 20).unwrap();
        let ids = model.encode("aXb");
        assert!(ids.contains(&UNK_ID));
    }

    #[test]
    fn decode_strips_framing_keeps_mask() {
        let c = corpus_from(&[("ab ab", "ba ba")]);
        let model = train_bpe(&[&c], 20).unwrap();
        let mut ids = vec![BOS_ID, LANG_TGT_ID];
        ids.extend(model.encode("ab ba"));
        ids.push(EOS_ID);
        assert_eq!(model.decode(&ids), "ab ba");
        assert!(model.decode(&[MASK_ID]).contains("<mask>"));
    }

    #[test]
    fn round_trip_random_training_alphabet_strings() {
        let c = corpus_from(&[
            ("abc cab bca", "cba bac acb"),
            ("aa bb cc", "ab bc ca"),
        ]);
        let model = train_bpe(&[&c], 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(222);
        for _ in 0..1000 {
            let words: Vec<String> = (0..rng.gen_range(1..6))
                .map(|_| {
                    (0..rng.gen_range(1..8))
                        .map(|_| ['a', 'b', 'c'][rng.gen_range(0..3)])
                        .collect()
                })
                .collect();
            let text = words.join(" ");
            let ids = model.encode(&text);
            assert!(!ids.contains(&UNK_ID), "unexpected <unk> for {text:?}");
            assert_eq!(model.decode(&ids), text);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let c = corpus_from(&[("abc cab bca ab", "cba bac acb ba"), ("ab ab ab", "ba ba ba")]);
        let m1 = train_bpe(&[&c], 30).unwrap();
        let m2 = train_bpe(&[&c], 30).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn tie_break_is_lexicographic() {
        // One pair type per word, equal counts: "ab" and "ba" both appear
        // once; ties must resolve to the lexicographically smaller pair.
        let c = corpus_from(&[("ab", "ba")]);
        let model = train_bpe(&[&c], 17).unwrap();
        // First merge must involve the smallest tied pair. All adjacent
        // pairs here occur once: (a,b), (b,</w>), (b,a), (a,</w>).
        assert_eq!(model.merges()[0], ("a".to_string(), "</w>".to_string()));
    }

    #[test]
    fn serde_round_trip_preserves_encoding() {
        let c = corpus_from(&[("abc cab", "cba bac")]);
        let model = train_bpe(&[&c], 30).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: SubwordModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
        assert_eq!(model.encode("abc cab"), back.encode("abc cab"));
    }
}
