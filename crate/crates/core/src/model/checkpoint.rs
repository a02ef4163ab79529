//! Versioned checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"CSGZCKPT" | u32 version | u32 header length | JSON header | f32 payload | SHA-256 of all preceding bytes
//! ```
//!
//! The header echoes the model config and seed, the phase tag, the training
//! step and optional training log, and lists every tensor as
//! `(name, shape, offset)` into the payload (offsets count `f32` values).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CsGaze, ModelConfig};
use crate::error::{Error, Result};
use crate::train::TrainLog;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CSGZCKPT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseTag {
    Initial,
    PretrainComplete,
    ClassifyComplete,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    phase: PhaseTag,
    step: u64,
    tensors: Vec<TensorEntry>,
    log: Option<TrainLog>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: CsGaze,
    pub phase: PhaseTag,
    pub step: u64,
    pub log: Option<TrainLog>,
}

pub fn save_checkpoint(model: &CsGaze, phase: PhaseTag, step: u64, log: Option<&TrainLog>, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    let mut offset = 0;
    for t in model.store.tensors() {
        tensors.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
        });
        offset += t.data.len();
        for &v in &t.data {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let header = serde_json::to_vec(&Header {
        config: model.config().clone(),
        seed: model.seed(),
        phase,
        step,
        tensors,
        log: log.cloned(),
    })?;
    let mut bytes = Vec::with_capacity(16 + header.len() + payload.len() + 32);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header);
    bytes.extend_from_slice(&payload);
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    // Write-then-rename so a crash never leaves a truncated checkpoint.
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    parse_checkpoint(&bytes)
}

pub(crate) fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 + 32 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch (file truncated or corrupted)"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let hlen = u32::from_le_bytes(body[12..16].try_into().expect("4 bytes")) as usize;
    if 16 + hlen > body.len() {
        return Err(corrupt("header length exceeds file size"));
    }
    let header: Header = serde_json::from_slice(&body[16..16 + hlen])
        .map_err(|e| corrupt(format!("malformed header: {e}")))?;
    let payload = &body[16 + hlen..];
    if payload.len() % 4 != 0 {
        return Err(corrupt("payload is not a whole number of f32 values"));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let mut model = CsGaze::new(header.config, header.seed)?;
    let mut seen = std::collections::BTreeSet::new();
    for t in &header.tensors {
        let n: usize = t.shape.iter().product();
        let data = values.get(t.offset..t.offset + n).ok_or_else(|| Error::Tensor {
            name: t.name.clone(),
            message: "payload too short".into(),
        })?;
        model.store.import(&t.name, &t.shape, data)?;
        seen.insert(t.name.as_str());
    }
    for t in model.store.tensors() {
        if !seen.contains(t.name.as_str()) {
            return Err(Error::Tensor {
                name: t.name.clone(),
                message: "missing from checkpoint".into(),
            });
        }
    }
    Ok(Checkpoint {
        model,
        phase: header.phase,
        step: header.step,
        log: header.log,
    })
}
