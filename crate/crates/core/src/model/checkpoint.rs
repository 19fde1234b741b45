//! Binary checkpoint files: magic, format version, the model config as JSON,
//! every tensor in layout order as little-endian `f64`, and a SHA-256 digest
//! over the whole payload.
//!
//! Loads verify the digest before parsing anything else, so a corrupted or
//! truncated file is always an error, never garbage parameters. Round trips
//! are bit-exact.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::config::{ConfigError, ModelConfig};
use crate::model::params::{Layout, ModelParams};

const MAGIC: &[u8; 4] = b"DCCK";
const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("checkpoint is corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint config is invalid: {0}")]
    Config(#[from] ConfigError),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Corrupt(format!(
                "truncated: needed {n} bytes at offset {}",
                self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
}

/// Serializes parameters to `path` (written via a temporary file and rename,
/// so no partial checkpoint is ever left behind).
pub fn save(params: &ModelParams, path: &Path) -> Result<(), CheckpointError> {
    let mut payload = Vec::with_capacity(params.values().len() * 8 + 4096);
    payload.extend_from_slice(MAGIC);
    payload.extend_from_slice(&VERSION.to_le_bytes());
    let config_json =
        serde_json::to_vec(params.config()).expect("model config always serializes");
    payload.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    payload.extend_from_slice(&config_json);
    let specs = params.layout().specs();
    payload.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for spec in specs {
        payload.extend_from_slice(&(spec.name.len() as u16).to_le_bytes());
        payload.extend_from_slice(spec.name.as_bytes());
        payload.push(spec.shape.len() as u8);
        for &dim in &spec.shape {
            payload.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &value in &params.values()[spec.offset..spec.offset + spec.len()] {
            payload.extend_from_slice(&value.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&payload);
    payload.extend_from_slice(&digest);

    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(&payload).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

/// Loads and fully validates a checkpoint: digest, magic, version, config,
/// and the exact tensor directory the config implies.
pub fn load(path: &Path) -> Result<ModelParams, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
        return Err(CheckpointError::Corrupt("file too small".into()));
    }
    let (payload, stored_digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    let digest = Sha256::digest(payload);
    if digest.as_slice() != stored_digest {
        return Err(CheckpointError::Corrupt("digest mismatch".into()));
    }

    let mut r = Reader {
        buf: payload,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let config_len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len)?)
        .map_err(|e| CheckpointError::Corrupt(format!("config block: {e}")))?;
    config.validate()?;
    let layout = Layout::build(&config)?;

    let count = r.u32()? as usize;
    if count != layout.specs().len() {
        return Err(CheckpointError::Corrupt(format!(
            "tensor count {count} does not match the config's {}",
            layout.specs().len()
        )));
    }
    let mut values = vec![0.0f64; layout.total_len()];
    for spec in layout.specs() {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8".into()))?;
        if name != spec.name {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {name:?} where {:?} was expected",
                spec.name
            )));
        }
        let ndim = r.u8()? as usize;
        if ndim != spec.shape.len() {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {name}: rank {ndim}, expected {}",
                spec.shape.len()
            )));
        }
        for &expect in &spec.shape {
            let dim = r.u32()? as usize;
            if dim != expect {
                return Err(CheckpointError::Corrupt(format!(
                    "tensor {name}: dimension {dim}, expected {expect}"
                )));
            }
        }
        let data = r.take(spec.len() * 8)?;
        for (i, chunk) in data.chunks_exact(8).enumerate() {
            values[spec.offset + i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if r.pos != payload.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} unexpected trailing bytes",
            payload.len() - r.pos
        )));
    }
    Ok(ModelParams::from_values(&config, values).expect("layout-sized buffer"))
}
