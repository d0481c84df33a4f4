//! `SDH1` model checkpoint. Integers little-endian:
//!
//! ```text
//! "SDH1" | u32 version=1 | u32 header_len | header JSON | tensor blobs (f32 LE)
//! ```
//!
//! The header holds the hyper-parameters and a tensor directory. Each entry
//! gives a name, rank, dims and a byte offset counted from the start of the
//! blob section. Tensors appear in canonical layout order.

use std::fs;
use std::path::Path;

use sentstruct_core::encoder::{AttentionScale, HyperParams, ModelParams};
use sentstruct_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MAGIC: &[u8; 4] = b"SDH1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRecord {
    pub dim: usize,
    pub max_sentences: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub mlp_hidden: usize,
    pub dropout_rate: f64,
    pub attention_scale: String,
}

impl From<&HyperParams> for HyperRecord {
    fn from(h: &HyperParams) -> Self {
        Self {
            dim: h.dim,
            max_sentences: h.max_sentences,
            n_layers: h.n_layers,
            n_heads: h.n_heads,
            d_ff: h.d_ff,
            mlp_hidden: h.mlp_hidden,
            dropout_rate: h.dropout_rate,
            attention_scale: h.scale.name().into(),
        }
    }
}

impl HyperRecord {
    pub fn to_hyper(&self) -> Result<HyperParams, CliError> {
        let scale = AttentionScale::from_name(&self.attention_scale).ok_or_else(|| {
            CliError::Corrupt(format!("unknown attention scale `{}`", self.attention_scale))
        })?;
        let h = HyperParams {
            dim: self.dim,
            max_sentences: self.max_sentences,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            mlp_hidden: self.mlp_hidden,
            dropout_rate: self.dropout_rate,
            scale,
        };
        h.validate().map_err(|e| CliError::Corrupt(e.to_string()))?;
        Ok(h)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rank: usize,
    dims: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    hyper: HyperRecord,
    tensors: Vec<TensorEntry>,
}

pub fn encode(hyper: &HyperParams, params: &ModelParams<f32>) -> Vec<u8> {
    let mut offset = 0u64;
    let tensors = ModelParams::<f32>::layout(hyper)
        .into_iter()
        .map(|(name, dims)| {
            let entry = TensorEntry {
                name,
                rank: dims.len(),
                offset,
                dims,
            };
            offset += 4 * entry.dims.iter().product::<usize>() as u64;
            entry
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        hyper: hyper.into(),
        tensors,
    })
    .expect("header serialises");

    let mut out = Vec::with_capacity(12 + header.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in params.tensors() {
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<(HyperParams, ModelParams<f32>), CliError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CliError::NotCheckpoint);
    }
    let word = |at: usize| -> Result<u32, CliError> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| CliError::Corrupt("truncated checkpoint preamble".into()))
    };
    let version = word(4)?;
    if version != VERSION {
        return Err(CliError::Corrupt(format!("unsupported checkpoint version {version}")));
    }
    let header_len = word(8)? as usize;
    let blob_start = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| CliError::Corrupt("truncated checkpoint header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[12..blob_start])
        .map_err(|e| CliError::Corrupt(format!("checkpoint header: {e}")))?;
    let hyper = header.hyper.to_hyper()?;
    let blobs = &bytes[blob_start..];

    let layout = ModelParams::<f32>::layout(&hyper);
    if layout.len() != header.tensors.len() {
        return Err(CliError::Corrupt(format!(
            "directory lists {} tensors, model needs {}",
            header.tensors.len(),
            layout.len()
        )));
    }
    let mut tensors = Vec::with_capacity(layout.len());
    let mut expected_offset = 0usize;
    for ((name, dims), entry) in layout.iter().zip(&header.tensors) {
        if &entry.name != name || &entry.dims != dims || entry.rank != dims.len() {
            return Err(CliError::Corrupt(format!(
                "directory entry `{}` {:?} does not match expected `{name}` {dims:?}",
                entry.name, entry.dims
            )));
        }
        if entry.offset != expected_offset as u64 {
            return Err(CliError::Corrupt(format!("tensor `{name}` has offset {}", entry.offset)));
        }
        let n = dims.iter().product::<usize>();
        let raw = blobs
            .get(expected_offset..expected_offset + 4 * n)
            .ok_or_else(|| CliError::Corrupt(format!("tensor `{name}` is truncated")))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(CliError::InvalidValue {
                offset: blob_start + expected_offset + 4 * i,
            });
        }
        tensors.push(Tensor::from_vec(dims, data).expect("length matches dims"));
        expected_offset += 4 * n;
    }
    if expected_offset != blobs.len() {
        return Err(CliError::Corrupt(format!(
            "{} trailing bytes after the last tensor",
            blobs.len() - expected_offset
        )));
    }
    let params = ModelParams::from_tensors(&hyper, tensors).map_err(|e| CliError::Corrupt(e.to_string()))?;
    Ok((hyper, params))
}

pub fn save(path: impl AsRef<Path>, hyper: &HyperParams, params: &ModelParams<f32>) -> Result<(), CliError> {
    let path = path.as_ref();
    fs::write(path, encode(hyper, params)).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(HyperParams, ModelParams<f32>), CliError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}

/// Short content hash of a checkpoint, used as the model id in reports.
pub fn model_id(bytes: &[u8]) -> String {
    format!("sdh1-{:016x}", sentstruct_core::rng::hash_bytes(bytes, 0))
}
