//! The append-only results store: one CSV row per completed schedule,
//! guarded by an advisory file lock so concurrent trainers don't interleave.
//!
//! Rows are never mutated. Re-recording a schedule is allowed only when the
//! new row is identical to the stored one (the reproducibility contract);
//! anything else is corruption and fails loudly.

use std::fs::OpenOptions;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use domaincraft_core::analysis::{ModeKind, RunResult};
use domaincraft_core::corpus::DomainId;
use domaincraft_core::strategy::Strategy;
use fs2::FileExt;

pub const HEADER: &str =
    "schedule_id,strategy,mode,test_domain,im_size,fi_size,metric,score,jsd_final_to_test";

/// Canonical CSV encoding of one row. Scores carry four decimals and
/// divergences six; every other field is already comma-free by construction.
pub fn format_row(row: &RunResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{:.4},{:.6}",
        row.schedule_id,
        row.strategy.slug(),
        row.mode,
        row.test_domain,
        row.im_size,
        row.fi_size,
        row.metric,
        row.score,
        row.jsd_final_to_test
    )
}

/// What an append did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    Appended,
    /// The store already holds this exact row.
    AlreadyRecorded,
}

/// Appends `row` under an exclusive lock, enforcing unique schedule ids.
pub fn append(path: &Path, row: &RunResult) -> Result<AppendOutcome> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = OpenOptions::new()
        .read(true)
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    file.lock_exclusive()
        .with_context(|| format!("locking {}", path.display()))?;
    // The lock releases when `file` drops; errors below leave the store
    // untouched except for a possibly missing trailing row.
    let mut text = String::new();
    file.seek(SeekFrom::Start(0))?;
    file.read_to_string(&mut text)?;
    let line = format_row(row);
    for existing in text.lines().skip(1) {
        let id = existing.split(',').next().unwrap_or_default();
        if id == row.schedule_id {
            if existing == line {
                return Ok(AppendOutcome::AlreadyRecorded);
            }
            bail!(
                "results store already has a different row for schedule {}: stored {existing:?}, new {line:?}",
                row.schedule_id
            );
        }
    }
    let mut payload = String::new();
    if text.is_empty() {
        payload.push_str(HEADER);
        payload.push('\n');
    }
    payload.push_str(&line);
    payload.push('\n');
    file.write_all(payload.as_bytes())?;
    Ok(AppendOutcome::Appended)
}

fn parse_row(line: &str, lineno: usize) -> Result<RunResult> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 9 {
        bail!("results line {lineno}: expected 9 fields, got {}", fields.len());
    }
    let ctx = |what: &str, value: &str, e: String| {
        anyhow!("results line {lineno}: bad {what} {value:?}: {e}")
    };
    Ok(RunResult {
        schedule_id: fields[0].to_string(),
        strategy: fields[1]
            .parse::<Strategy>()
            .map_err(|e| ctx("strategy", fields[1], e))?,
        mode: fields[2]
            .parse::<ModeKind>()
            .map_err(|e| ctx("mode", fields[2], e))?,
        test_domain: DomainId::new(fields[3])
            .map_err(|e| ctx("test_domain", fields[3], e.to_string()))?,
        im_size: fields[4]
            .parse()
            .map_err(|e: std::num::ParseIntError| ctx("im_size", fields[4], e.to_string()))?,
        fi_size: fields[5]
            .parse()
            .map_err(|e: std::num::ParseIntError| ctx("fi_size", fields[5], e.to_string()))?,
        metric: fields[6].to_string(),
        score: fields[7]
            .parse()
            .map_err(|e: std::num::ParseFloatError| ctx("score", fields[7], e.to_string()))?,
        jsd_final_to_test: fields[8]
            .parse()
            .map_err(|e: std::num::ParseFloatError| ctx("jsd", fields[8], e.to_string()))?,
    })
}

/// Reads every row under a shared lock. A missing file is an empty store.
pub fn read_all(path: &Path) -> Result<Vec<RunResult>> {
    let mut file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e).with_context(|| format!("opening {}", path.display())),
    };
    file.lock_shared()
        .with_context(|| format!("locking {}", path.display()))?;
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    let mut lines = text.lines();
    match lines.next() {
        None => return Ok(Vec::new()),
        Some(h) if h == HEADER => {}
        Some(h) => bail!("results store has an unexpected header {h:?}"),
    }
    lines
        .enumerate()
        .map(|(i, line)| parse_row(line, i + 2))
        .collect()
}
