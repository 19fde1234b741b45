//! Flat `key = value` workspace configuration.
//!
//! One human-editable file (`config.txt` in the workspace root) holds every
//! tunable; nested structure uses dotted keys. Resolution order for each key
//! is command-line override, then the file, then the built-in default, and
//! the fully resolved listing is what gets hashed into run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use domaincraft_core::analysis::Thresholds;
use domaincraft_core::corpus::LangPair;
use domaincraft_core::divergence::SidePolicy;
use domaincraft_core::model::{ModelConfig, NoiseConfig, TrainConfig};

/// File name of the workspace configuration.
pub const CONFIG_FILE: &str = "config.txt";

/// Every recognized key with its default (as written) and a short note for
/// the generated template. Unknown keys in the file are an error — silent
/// typos would otherwise change experiments.
const KEYS: &[(&str, &str, &str)] = &[
    ("lang", "xx-yy", "language pair, source-target"),
    ("seed", "222", "base seed; every random stream derives from it"),
    ("bleu.tokenizer", "word", "scoring tokenization: word | subword"),
    ("model.layers", "2", "encoder and decoder layers"),
    ("model.heads", "4", "attention heads"),
    ("model.width", "128", "embedding/residual width"),
    ("model.ffn_width", "256", "feed-forward inner width"),
    ("model.max_len", "128", "sequence length cap, framing included"),
    ("model.dropout", "0.3", "residual/embedding dropout"),
    ("model.attention_dropout", "0.1", "attention-probability dropout"),
    ("model.vocab_size", "1000", "subword vocabulary size"),
    ("train.epochs", "3", "epochs per training stage"),
    ("train.learning_rate", "3e-5", "Adam learning rate"),
    ("train.batch_size", "32", "sentences per optimizer step"),
    ("train.dropout", "", "stage override of model.dropout (empty = unset)"),
    (
        "train.attention_dropout",
        "",
        "stage override of model.attention_dropout (empty = unset)",
    ),
    ("noise.mask_ratio", "0.35", "fraction of tokens masked for denoising"),
    ("noise.mean_span_len", "3.5", "mean masked-span length"),
    ("divergence.side", "both", "which side feeds divergence: source | target | both"),
    ("stopwords.source", "", "optional stopword file for the source side"),
    ("stopwords.target", "", "optional stopword file for the target side"),
    ("recommend.pretrain_min_total", "50000", "below this total, exclude pre-training"),
    ("recommend.large_target", "25000", "target size at which plain fine-tuning wins"),
    ("recommend.large_aux", "25000", "auxiliary size considered large"),
];

fn default_for(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, d, _)| *d)
}

/// The commented template written by `ingest` into a fresh workspace.
pub fn template() -> String {
    let mut out = String::from(
        "# domaincraft workspace configuration\n\
         # One `key = value` per line; `#` lines are comments.\n\
         # Command-line --set key=value overrides any entry here.\n\n",
    );
    for (key, default, note) in KEYS {
        let _ = writeln!(out, "# {note}");
        let _ = writeln!(out, "{key} = {default}\n");
    }
    out
}

/// Merged view of file entries and command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Config {
    file: BTreeMap<String, String>,
    overrides: BTreeMap<String, String>,
}

impl Config {
    /// Loads the workspace file (missing file = all defaults) and applies
    /// `--set key=value` / `--seed` overrides.
    pub fn load(workspace: &Path, sets: &[String], seed: Option<u64>) -> Result<Config> {
        let path = workspace.join(CONFIG_FILE);
        let mut cfg = Config::default();
        if path.exists() {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            cfg.file = parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        }
        for entry in sets {
            let (key, value) = entry
                .split_once('=')
                .ok_or_else(|| anyhow!("--set {entry:?} is not of the form key=value"))?;
            let key = key.trim();
            if default_for(key).is_none() {
                bail!("unknown config key {key:?} in --set");
            }
            cfg.overrides.insert(key.to_string(), value.trim().to_string());
        }
        if let Some(seed) = seed {
            cfg.overrides.insert("seed".into(), seed.to_string());
        }
        Ok(cfg)
    }

    /// Resolved raw value of `key`: override > file > default.
    pub fn raw(&self, key: &str) -> &str {
        self.overrides
            .get(key)
            .or_else(|| self.file.get(key))
            .map(String::as_str)
            .unwrap_or_else(|| default_for(key).unwrap_or_default())
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|e| anyhow!("config key {key} = {raw:?}: {e}"))
    }

    fn parsed_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Ok(None);
        }
        Ok(Some(self.parsed(key)?))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parsed("seed")
    }

    pub fn lang(&self) -> Result<LangPair> {
        LangPair::from_str(self.raw("lang")).map_err(|e| anyhow!("config key lang: {e}"))
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            layers: self.parsed("model.layers")?,
            heads: self.parsed("model.heads")?,
            width: self.parsed("model.width")?,
            ffn_width: self.parsed("model.ffn_width")?,
            max_len: self.parsed("model.max_len")?,
            dropout: self.parsed("model.dropout")?,
            attention_dropout: self.parsed("model.attention_dropout")?,
            vocab_size: self.parsed("model.vocab_size")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.parsed("train.epochs")?,
            learning_rate: self.parsed("train.learning_rate")?,
            batch_size: self.parsed("train.batch_size")?,
            seed: self.seed()?,
            dropout: self.parsed_opt("train.dropout")?,
            attention_dropout: self.parsed_opt("train.attention_dropout")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noise(&self) -> Result<NoiseConfig> {
        let cfg = NoiseConfig {
            mask_ratio: self.parsed("noise.mask_ratio")?,
            mean_span_len: self.parsed("noise.mean_span_len")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// BLEU tokenization mode; `subword` scores over BPE pieces.
    pub fn subword_bleu(&self) -> Result<bool> {
        match self.raw("bleu.tokenizer") {
            "word" => Ok(false),
            "subword" => Ok(true),
            other => bail!("config key bleu.tokenizer = {other:?}: expected word or subword"),
        }
    }

    pub fn side(&self) -> Result<SidePolicy> {
        match self.raw("divergence.side") {
            "source" => Ok(SidePolicy::Source),
            "target" => Ok(SidePolicy::Target),
            "both" => Ok(SidePolicy::Both),
            other => {
                bail!("config key divergence.side = {other:?}: expected source, target, or both")
            }
        }
    }

    pub fn stopword_paths(&self) -> (Option<PathBuf>, Option<PathBuf>) {
        let get = |key: &str| {
            let raw = self.raw(key);
            (!raw.is_empty()).then(|| PathBuf::from(raw))
        };
        (get("stopwords.source"), get("stopwords.target"))
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        Ok(Thresholds {
            pretrain_min_total: self.parsed("recommend.pretrain_min_total")?,
            large_target: self.parsed("recommend.large_target")?,
            large_aux: self.parsed("recommend.large_aux")?,
        })
    }

    /// The fully resolved configuration as sorted `key = value` lines — the
    /// canonical form that run manifests hash.
    pub fn effective(&self) -> String {
        let mut out = String::new();
        for (key, _, _) in KEYS {
            let _ = writeln!(out, "{key} = {}", self.raw(key));
        }
        out
    }
}

/// Parses `key = value` lines; `#` lines and blank lines are skipped.
fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value, got {line:?}", lineno + 1))?;
        let key = key.trim().to_string();
        if default_for(&key).is_none() {
            bail!("line {}: unknown config key {key:?}", lineno + 1);
        }
        if entries.insert(key.clone(), value.trim().to_string()).is_some() {
            bail!("line {}: duplicate config key {key:?}", lineno + 1);
        }
    }
    Ok(entries)
}
