//! Run manifests: everything needed to re-execute a schedule bit-for-bit on
//! the same build, stored as one JSON file per schedule id.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use domaincraft_core::corpus::LangPair;
use domaincraft_core::divergence::{load_stopwords, SidePolicy, Stopwords};
use domaincraft_core::eval::BleuTokenizer;
use domaincraft_core::model::{ModelConfig, NoiseConfig, SubwordModel, TrainConfig};
use domaincraft_core::strategy::Schedule;
use serde::{Deserialize, Serialize};

/// Toolkit version stamped into manifests; replay demands an exact match.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Fully resolved run settings as they applied to this schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSettings {
    pub lang: String,
    pub model: ModelConfig,
    /// Base stage settings; a stage's own `train` override wins where set.
    pub train: TrainConfig,
    pub noise: NoiseConfig,
    pub bleu_tokenizer: String,
    pub divergence_side: String,
    /// Workspace-relative stopword files, when configured.
    pub stopwords_source: Option<String>,
    pub stopwords_target: Option<String>,
}

impl EffectiveSettings {
    pub fn lang_pair(&self) -> Result<LangPair> {
        self.lang
            .parse()
            .with_context(|| format!("manifest language pair {:?}", self.lang))
    }

    pub fn side(&self) -> Result<SidePolicy> {
        match self.divergence_side.as_str() {
            "source" => Ok(SidePolicy::Source),
            "target" => Ok(SidePolicy::Target),
            "both" => Ok(SidePolicy::Both),
            other => bail!("manifest divergence side {other:?}: expected source, target, or both"),
        }
    }

    /// Stopword lists from the paths pinned at plan time.
    pub fn stopwords(&self, root: &Path) -> Result<Stopwords> {
        let load = |p: &Option<String>| -> Result<_> {
            match p {
                None => Ok(Default::default()),
                Some(p) => {
                    let pb = PathBuf::from(p);
                    let abs = if pb.is_absolute() { pb } else { root.join(pb) };
                    load_stopwords(&abs)
                        .with_context(|| format!("loading stopwords {}", abs.display()))
                }
            }
        };
        Ok(Stopwords {
            source: load(&self.stopwords_source)?,
            target: load(&self.stopwords_target)?,
        })
    }

    pub fn tokenizer<'a>(&self, subword: &'a SubwordModel) -> Result<BleuTokenizer<'a>> {
        match self.bleu_tokenizer.as_str() {
            "word" => Ok(BleuTokenizer::Word),
            "subword" => Ok(BleuTokenizer::Subword(subword)),
            other => bail!("manifest BLEU tokenizer {other:?}: expected word or subword"),
        }
    }
}

/// Files produced by `train`, relative to the workspace root.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Outputs {
    pub checkpoints: Vec<String>,
    pub subword: Option<String>,
    pub results_row: bool,
}

/// The replay record for one schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub schedule: Schedule,
    /// Base seed; every random stream is derived from it and the labels
    /// recorded in the schedule itself.
    pub base_seed: u64,
    /// SHA-256 of the resolved flat configuration text.
    pub config_sha256: String,
    pub effective: EffectiveSettings,
    /// Workspace-relative corpus file → SHA-256.
    pub corpus_digests: BTreeMap<String, String>,
    pub planned_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_at: Option<String>,
    #[serde(default)]
    pub outputs: Outputs,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            anyhow!("no manifest at {} ({e}); run `plan` first", path.display())
        })?;
        let manifest: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if manifest.version != TOOLKIT_VERSION {
            bail!(
                "manifest {} was written by toolkit {} but this build is {TOOLKIT_VERSION}",
                path.display(),
                manifest.version
            );
        }
        Ok(manifest)
    }
}

/// RFC 3339 UTC timestamp with whole-second precision.
pub fn now_utc() -> String {
    chrono::Utc::now()
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}
