//! Workspace layout, corpus access, and file digests.
//!
//! A workspace is one directory holding everything an experiment touches:
//!
//! ```text
//! <root>/config.txt                        flat key = value configuration
//! <root>/corpora/<lang>/<dom>/<split>.*    aligned text, one sentence per line
//! <root>/manifests/<schedule-id>.json      replayable run manifests
//! <root>/results/results.csv               append-only score rows
//! <root>/checkpoints/<schedule-id>/        model snapshots + subword model
//! <root>/reports/                          report tables and charts
//! <root>/divergence/                       divergence matrix outputs
//! ```

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use domaincraft_core::corpus::{self, DomainId, LangPair, ParallelCorpus, Split};
use domaincraft_core::divergence::{load_stopwords, Stopwords};
use sha2::{Digest, Sha256};

use crate::config::Config;

/// Environment variable that points commands at a workspace when no
/// `--workspace` flag is given.
pub const WORKSPACE_ENV: &str = "DOMAINCRAFT_WORKSPACE";

/// Flag > environment > `./workspace`.
pub fn resolve_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(WORKSPACE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("workspace"))
}

pub fn manifests_dir(root: &Path) -> PathBuf {
    root.join("manifests")
}

pub fn manifest_path(root: &Path, schedule_id: &str) -> PathBuf {
    manifests_dir(root).join(format!("{schedule_id}.json"))
}

pub fn results_path(root: &Path) -> PathBuf {
    root.join("results").join("results.csv")
}

pub fn checkpoints_dir(root: &Path, schedule_id: &str) -> PathBuf {
    root.join("checkpoints").join(schedule_id)
}

pub fn reports_dir(root: &Path) -> PathBuf {
    root.join("reports")
}

pub fn divergence_dir(root: &Path) -> PathBuf {
    root.join("divergence")
}

/// Creates the workspace skeleton (idempotent).
pub fn ensure_layout(root: &Path) -> Result<()> {
    for dir in [
        root.to_path_buf(),
        root.join("corpora"),
        manifests_dir(root),
        root.join("results"),
        root.join("checkpoints"),
        reports_dir(root),
        divergence_dir(root),
    ] {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// A command that reads shared state refuses to run outside a workspace.
pub fn require_root(root: &Path) -> Result<()> {
    if !root.is_dir() {
        return Err(anyhow!(
            "workspace {} does not exist (run `ingest` to create it, or set --workspace/{WORKSPACE_ENV})",
            root.display()
        ));
    }
    Ok(())
}

/// All domains with corpora for `lang`, sorted by id.
pub fn list_domains(root: &Path, lang: &LangPair) -> Result<Vec<DomainId>> {
    let dir = root.join("corpora").join(lang.dir_name());
    let mut domains = Vec::new();
    if dir.is_dir() {
        for entry in std::fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                let name = entry.file_name();
                let name = name.to_string_lossy();
                domains.push(
                    DomainId::new(&name)
                        .map_err(|e| anyhow!("corpus directory {name:?}: {e}"))?,
                );
            }
        }
    }
    domains.sort();
    Ok(domains)
}

/// Loads one split of one domain, reporting dropped lines on stderr.
pub fn load_split(
    root: &Path,
    lang: &LangPair,
    domain: &DomainId,
    split: Split,
) -> Result<ParallelCorpus> {
    let report = corpus::load_from_workspace(root, lang, domain, split)
        .with_context(|| format!("loading {domain}/{split}"))?;
    if report.dropped > 0 {
        eprintln!("note: {domain}/{split}: dropped {} empty pair(s)", report.dropped);
    }
    Ok(report.corpus)
}

/// The two corpus files backing one split, relative to the workspace root.
pub fn split_files(lang: &LangPair, domain: &DomainId, split: Split) -> [String; 2] {
    let dir = format!("corpora/{}/{}", lang.dir_name(), domain);
    [
        format!("{dir}/{split}.src.txt"),
        format!("{dir}/{split}.tgt.txt"),
    ]
}

/// SHA-256 of a file, lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("digesting {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Stopword lists from the configured paths (empty sets when unset).
pub fn stopwords(root: &Path, cfg: &Config) -> Result<Stopwords> {
    let (src, tgt) = cfg.stopword_paths();
    let load = |p: Option<PathBuf>| -> Result<_> {
        match p {
            None => Ok(Default::default()),
            Some(p) => {
                let abs = if p.is_absolute() { p } else { root.join(p) };
                load_stopwords(&abs).with_context(|| format!("loading stopwords {}", abs.display()))
            }
        }
    };
    Ok(Stopwords {
        source: load(src)?,
        target: load(tgt)?,
    })
}
