//! Checkpoint container.
//!
//! ```text
//! "AOMC" | version: u16 LE | manifest_len: u32 LE | manifest (UTF-8 JSON)
//!        | payload: concatenated f32 LE tensors, row-major
//! ```
//!
//! The manifest holds the model config, optional training config, seed, step
//! and a tensor directory of `{name, shape, offset}` with offsets in bytes
//! from the start of the payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Real};
use crate::data::write_atomic;
use crate::error::{AomError, Result};

use super::config::ModelConfig;
use super::model::AomModel;
use super::params::ParamStore;

pub const CKPT_MAGIC: &[u8; 4] = b"AOMC";
pub const CKPT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    model: ModelConfig,
    #[serde(default)]
    train: Option<serde_json::Value>,
    seed: u64,
    step: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: Option<serde_json::Value>,
    pub seed: u64,
    pub step: u64,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn from_model<T: Real>(model: &AomModel<T>, train: Option<serde_json::Value>, seed: u64, step: u64) -> Self {
        Self {
            model: model.config().clone(),
            train,
            seed,
            step,
            params: model.params().cast(),
        }
    }

    pub fn to_model<T: Real>(&self) -> Result<AomModel<T>> {
        AomModel::from_params(self.model.clone(), self.params.cast())
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(ckpt.params.len());
    let mut offset = 0;
    for (name, v) in ckpt.params.names().iter().zip(ckpt.params.values()) {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: [v.rows(), v.cols()],
            offset,
        });
        offset += 4 * v.len();
    }
    let manifest = Manifest {
        model: ckpt.model.clone(),
        train: ckpt.train.clone(),
        seed: ckpt.seed,
        step: ckpt.step,
        tensors,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(10 + json.len() + offset);
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in ckpt.params.values() {
        for x in v.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != CKPT_MAGIC {
        return Err(AomError::Header("not a checkpoint file (bad magic bytes)".into()));
    }
    if bytes.len() < 10 {
        return Err(AomError::Header("checkpoint too short for a manifest".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CKPT_VERSION {
        return Err(AomError::Version {
            found: version,
            expected: CKPT_VERSION,
        });
    }
    let len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let start = 10usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| AomError::Header("manifest extends past end of file".into()))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[10..start]).map_err(|e| AomError::Header(e.to_string()))?;
    let payload = &bytes[start..];
    let mut params = ParamStore::new();
    let mut expected = 0;
    for t in &manifest.tensors {
        let n = t.shape[0] * t.shape[1];
        if t.offset != expected || t.offset + 4 * n > payload.len() {
            return Err(AomError::PayloadLength {
                expected: t.offset + 4 * n,
                found: payload.len(),
            });
        }
        let data = payload[t.offset..t.offset + 4 * n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        params.insert(t.name.clone(), Matrix::from_vec(t.shape[0], t.shape[1], data))?;
        expected += 4 * n;
    }
    if expected != payload.len() {
        return Err(AomError::PayloadLength {
            expected,
            found: payload.len(),
        });
    }
    let ckpt = Checkpoint {
        model: manifest.model,
        train: manifest.train,
        seed: manifest.seed,
        step: manifest.step,
        params,
    };
    ckpt.to_model::<f32>()?;
    Ok(ckpt)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| AomError::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{DecoderConfig, EncoderConfig};

    fn ckpt() -> Checkpoint {
        let cfg = ModelConfig {
            encoder: EncoderConfig {
                depth: 1,
                embed_dim: 8,
                num_heads: 2,
                mlp_ratio: 2.0,
                layernorm_eps: 1e-6,
            },
            decoder: DecoderConfig {
                depth: 1,
                decoder_dim: 4,
                num_heads: 1,
                mlp_ratio: 2.0,
            },
            head_dim: 6,
            bank_sizes: vec![4],
            scales: vec![4, 8],
            ..ModelConfig::default()
        };
        let m = AomModel::<f32>::new(cfg, 11).unwrap();
        Checkpoint::from_model(&m, Some(serde_json::json!({"steps": 3})), 11, 3)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        let c = ckpt();
        save_checkpoint(&c, &a).unwrap();
        let loaded = load_checkpoint(&a).unwrap();
        assert_eq!(loaded, c);
        save_checkpoint(&loaded, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn wrong_version_and_magic() {
        let mut bytes = encode_checkpoint(&ckpt()).unwrap();
        bytes[4] = 9;
        let e = decode_checkpoint(&bytes).unwrap_err().to_string();
        assert!(e.contains('9') && e.contains('1'), "{e}");
        bytes[0] = b'X';
        assert!(decode_checkpoint(&bytes).is_err());
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = encode_checkpoint(&ckpt()).unwrap();
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 4]),
            Err(AomError::PayloadLength { .. })
        ));
    }
}
