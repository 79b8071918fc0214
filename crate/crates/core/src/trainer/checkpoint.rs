//! Binary checkpoint format.
//!
//! Layout: `MTAF`, one version byte, an 8-byte little-endian header length,
//! a JSON header, then little-endian `f32` tensors in manifest order
//! (parameters, then first and second optimizer moments).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::optim::Adam;
use crate::model::{ModelConfig, ModelParams, Tensor};
use crate::tokenizer::Vocab;

pub const MAGIC: &[u8; 4] = b"MTAF";
pub const FORMAT_VERSION: u8 = 1;

const M_PREFIX: &str = "adam.m.";
const V_PREFIX: &str = "adam.v.";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("truncated payload: need {needed} bytes, found {found}")]
    TruncatedPayload { needed: usize, found: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("vocabulary hash mismatch: checkpoint {expected}, vocab in use {found}")]
    VocabMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Model weights plus everything needed to resume optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub optimizer: Adam<f32>,
    pub vocab_hash: String,
    pub step: u64,
    pub phase_index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab_hash: String,
    step: u64,
    phase_index: usize,
    optimizer_step: u64,
    learning_rate: f64,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    fn all_tensors(&self) -> Vec<(String, &Tensor<f32>)> {
        let mut out = self.params.tensors();
        out.extend(
            self.optimizer
                .m
                .tensors()
                .into_iter()
                .map(|(n, t)| (format!("{M_PREFIX}{n}"), t)),
        );
        out.extend(
            self.optimizer
                .v
                .tensors()
                .into_iter()
                .map(|(n, t)| (format!("{V_PREFIX}{n}"), t)),
        );
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::new();
        let mut payload = Vec::new();
        for (name, t) in self.all_tensors() {
            entries.push(TensorEntry {
                name,
                shape: t.shape.clone(),
                offset: payload.len(),
            });
            for x in &t.data {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        let header = Header {
            config: self.params.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            step: self.step,
            phase_index: self.phase_index,
            optimizer_step: self.optimizer.step,
            learning_rate: self.optimizer.learning_rate,
            tensors: entries,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(13 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = *bytes.get(4).ok_or(CheckpointError::TruncatedHeader)?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let len_bytes: [u8; 8] = bytes
            .get(5..13)
            .ok_or(CheckpointError::TruncatedHeader)?
            .try_into()
            .unwrap();
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let header_end = 13usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or(CheckpointError::TruncatedHeader)?;
        let header: Header = serde_json::from_slice(&bytes[13..header_end])
            .map_err(|e| CheckpointError::MalformedHeader(e.to_string()))?;
        header
            .config
            .validate()
            .map_err(|e| CheckpointError::MalformedHeader(e.to_string()))?;
        let payload = &bytes[header_end..];

        let mut params = Vec::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let end = entry.offset + 4 * n;
            if end > payload.len() {
                return Err(CheckpointError::TruncatedPayload {
                    needed: end,
                    found: payload.len(),
                });
            }
            let data = payload[entry.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Tensor {
                shape: entry.shape,
                data,
            };
            if let Some(name) = entry.name.strip_prefix(M_PREFIX) {
                m.push((name.to_string(), tensor));
            } else if let Some(name) = entry.name.strip_prefix(V_PREFIX) {
                v.push((name.to_string(), tensor));
            } else {
                params.push((entry.name, tensor));
            }
        }
        let build = |ts| ModelParams::from_tensors(&header.config, ts).map_err(CheckpointError::ShapeMismatch);
        Ok(Self {
            params: build(params)?,
            optimizer: Adam {
                m: build(m)?,
                v: build(v)?,
                step: header.optimizer_step,
                learning_rate: header.learning_rate,
            },
            vocab_hash: header.vocab_hash,
            step: header.step,
            phase_index: header.phase_index,
        })
    }

    /// SHA-256 of the serialized checkpoint, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn check_vocab(&self, vocab: &Vocab) -> Result<(), CheckpointError> {
        let found = vocab.hash();
        if found != self.vocab_hash {
            return Err(CheckpointError::VocabMismatch {
                expected: self.vocab_hash.clone(),
                found,
            });
        }
        Ok(())
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&ckpt.to_bytes())?;
    f.sync_all()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

/// Loads a checkpoint and checks every tensor shape against `config`.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, config: &ModelConfig) -> Result<Checkpoint, CheckpointError> {
    let ckpt = load_checkpoint(path)?;
    let want = ModelParams::<f32>::manifest(config);
    let have = ModelParams::<f32>::manifest(ckpt.config());
    if want.len() != have.len() {
        return Err(CheckpointError::ShapeMismatch(format!(
            "expected {} tensors, checkpoint has {}",
            want.len(),
            have.len()
        )));
    }
    for ((name, w), (_, h)) in want.iter().zip(&have) {
        if w != h {
            return Err(CheckpointError::ShapeMismatch(format!(
                "{name}: expected {w:?}, checkpoint has {h:?}"
            )));
        }
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init, ModelConfig};

    fn sample(d_model: usize) -> Checkpoint {
        let config = ModelConfig {
            d_model,
            ..ModelConfig::micro(40, 12)
        };
        let params = init::<f32>(&config, 5).unwrap();
        let mut optimizer = Adam::new(&params, 3e-4);
        optimizer.m.final_gain.data[3] = 0.25;
        optimizer.v.token_embedding.data[7] = f32::MIN_POSITIVE;
        optimizer.step = 9;
        Checkpoint {
            params,
            optimizer,
            vocab_hash: "abc".into(),
            step: 9,
            phase_index: 1,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ck = sample(16);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.mtaf");
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        for ((n, a), (_, b)) in ck.all_tensors().iter().zip(back.all_tensors()) {
            let ab: Vec<u32> = a.data.iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u32> = b.data.iter().map(|x| x.to_bits()).collect();
            assert_eq!(ab, bb, "{n}");
        }
        assert_eq!(back, ck);
        assert_eq!(back.hash(), ck.hash());
    }

    #[test]
    fn truncated_mid_tensor() {
        let bytes = sample(16).to_bytes();
        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(
            Checkpoint::from_bytes(cut),
            Err(CheckpointError::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = sample(16).to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn shape_mismatch_against_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.mtaf");
        save_checkpoint(&sample(16), &path).unwrap();
        let bigger = ModelConfig {
            d_model: 32,
            ..ModelConfig::micro(40, 12)
        };
        assert!(matches!(
            load_checkpoint_expecting(&path, &bigger),
            Err(CheckpointError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn header_shape_disagreeing_with_config_is_rejected() {
        let ck = sample(16);
        let mut bytes = ck.to_bytes();
        let header_len = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let text = String::from_utf8(bytes[13..13 + header_len].to_vec()).unwrap();
        // swap the declared shape of one tensor without changing its size
        let edited = text.replacen("\"shape\":[40,16]", "\"shape\":[16,40]", 1);
        assert_ne!(edited, text);
        bytes.splice(13..13 + header_len, edited.into_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::ShapeMismatch(_))
        ));
    }
}
