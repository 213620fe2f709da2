//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `MDHANCK1`, a little-endian `u32` header length,
//! a UTF-8 JSON header, then every tensor's values as little-endian `f64` in
//! header order. The header holds the model config, its SHA-256 hash, the
//! tensor directory (name, shape, element offset) and free-form extras used by
//! the pipeline (normalization statistics, topic model, split). The frozen
//! embedding table is not stored.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mdhan, ModelConfig};
use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MDHANCK1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    config_hash: String,
    tensors: Vec<TensorEntry>,
    extras: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub extras: serde_json::Value,
}

pub(super) fn to_bytes(model: &Mdhan, extras: &serde_json::Value) -> Result<Vec<u8>> {
    let mut offset = 0;
    let tensors = model
        .params
        .iter()
        .map(|(_, name, t)| {
            let e = TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), offset };
            offset += t.len();
            e
        })
        .collect();
    let header = Header {
        config: model.config.clone(),
        config_hash: model.config.hash(),
        tensors,
        extras: extras.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Checkpoint("header too large".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * offset);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, t) in model.params.iter() {
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub(super) fn save(path: &Path, model: &Mdhan, extras: &serde_json::Value) -> Result<()> {
    let bytes = to_bytes(model, extras)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl Checkpoint {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        if header.config.hash() != header.config_hash {
            return Err(bad("config hash mismatch"));
        }
        let data = &bytes[12 + len..];
        if !data.len().is_multiple_of(8) {
            return Err(bad("tensor data is not a whole number of f64 values"));
        }
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut params = ParamStore::new();
        let mut expected = 0;
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            if e.offset != expected || e.offset + n > values.len() {
                return Err(Error::Checkpoint(format!("tensor `{}` lies outside the data block", e.name)));
            }
            let t = Tensor::new(e.shape, values[e.offset..e.offset + n].to_vec())?;
            params.add(e.name, t);
            expected += n;
        }
        if expected != values.len() {
            return Err(bad("trailing tensor data"));
        }
        Ok(Checkpoint { config: header.config, params, extras: header.extras })
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
