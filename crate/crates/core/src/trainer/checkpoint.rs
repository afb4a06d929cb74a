//! Binary checkpoints: a JSON header line, a `\n\0` separator, then the
//! parameter arrays as little-endian `f32` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelDims, TrainConfig};
use crate::encoder::EncoderParams;
use crate::error::CheckpointError;
use crate::model::RankingModel;
use crate::numeric::DenseMatrix;
use crate::{Model, Model32};

pub const CHECKPOINT_VERSION: u32 = 1;
const SEPARATOR: &[u8] = b"\n\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub dims: ModelDims,
    pub vocab_hash: String,
    pub schema_hash: String,
    pub config: TrainConfig,
    pub epoch: usize,
    pub arrays: Vec<ArrayInfo>,
}

/// A stored model with the provenance needed to reload it safely.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model32,
    pub vocab_hash: String,
    pub schema_hash: String,
    pub config: TrainConfig,
    /// Epochs completed.
    pub epoch: usize,
}

impl Checkpoint {
    pub fn from_model(
        model: &Model,
        vocab_hash: &str,
        schema_hash: &str,
        config: TrainConfig,
        epoch: usize,
    ) -> Self {
        Self {
            model: cast_model(model),
            vocab_hash: vocab_hash.to_owned(),
            schema_hash: schema_hash.to_owned(),
            config,
            epoch,
        }
    }

    pub fn model_f64(&self) -> Model {
        cast_model(&self.model)
    }

    pub fn dims(&self) -> ModelDims {
        let e = &self.model.encoder;
        ModelDims {
            encoder: e.shape,
            vocab_size: e.words.rows(),
            pos_rows: e.pos_head.rows(),
            relations: self.model.classes.rows(),
            nr: self.model.nr,
        }
    }

    /// Fails unless both hashes match the ones stored.
    pub fn verify(&self, vocab_hash: &str, schema_hash: &str) -> Result<(), CheckpointError> {
        for (what, stored, actual) in [
            ("vocabulary", &self.vocab_hash, vocab_hash),
            ("relation schema", &self.schema_hash, schema_hash),
        ] {
            if stored != actual {
                return Err(CheckpointError::HashMismatch {
                    what,
                    stored: stored.clone(),
                    actual: actual.to_owned(),
                });
            }
        }
        Ok(())
    }

    fn arrays(&self) -> Vec<(&'static str, usize, usize, &[f32])> {
        let e = &self.model.encoder;
        fn m<'a>(
            name: &'static str,
            x: &'a DenseMatrix<f32>,
        ) -> (&'static str, usize, usize, &'a [f32]) {
            (name, x.rows(), x.cols(), x.as_slice())
        }
        vec![
            m("words", &e.words),
            m("pos_head", &e.pos_head),
            m("pos_tail", &e.pos_tail),
            m("kernels", &e.kernels),
            ("bias", 1, e.bias.len(), e.bias.as_slice()),
            m("classes", &self.model.classes),
        ]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let arrays = self.arrays();
        let header = CheckpointHeader {
            version: CHECKPOINT_VERSION,
            dims: self.dims(),
            vocab_hash: self.vocab_hash.clone(),
            schema_hash: self.schema_hash.clone(),
            config: self.config,
            epoch: self.epoch,
            arrays: arrays
                .iter()
                .map(|&(name, rows, cols, _)| ArrayInfo {
                    name: name.to_owned(),
                    rows,
                    cols,
                })
                .collect(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serialises");
        out.extend_from_slice(SEPARATOR);
        for (_, _, _, data) in arrays {
            for x in data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let split = bytes
            .windows(SEPARATOR.len())
            .position(|w| w == SEPARATOR)
            .ok_or_else(|| CheckpointError::Malformed("missing header separator".into()))?;
        let raw: serde_json::Value = serde_json::from_slice(&bytes[..split])
            .map_err(|e| CheckpointError::Malformed(format!("header: {e}")))?;
        let version = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| CheckpointError::Malformed("header has no version".into()))?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(CheckpointError::Version {
                found: version as u32,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header: CheckpointHeader = serde_json::from_value(raw)
            .map_err(|e| CheckpointError::Malformed(format!("header: {e}")))?;
        let payload = &bytes[split + SEPARATOR.len()..];
        let expected: usize = header.arrays.iter().map(|a| a.rows * a.cols * 4).sum();
        if payload.len() < expected {
            return Err(CheckpointError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(CheckpointError::Malformed(format!(
                "{} trailing bytes",
                payload.len() - expected
            )));
        }
        let mut floats = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let mut take = |name: &str| -> Result<DenseMatrix<f32>, CheckpointError> {
            let info = header
                .arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| CheckpointError::Malformed(format!("array {name} missing")))?;
            let data: Vec<f32> = floats.by_ref().take(info.rows * info.cols).collect();
            DenseMatrix::from_vec(info.rows, info.cols, data)
                .map_err(|e| CheckpointError::Malformed(e.to_string()))
        };
        let order: Vec<&str> = header.arrays.iter().map(|a| a.name.as_str()).collect();
        if order
            != [
                "words", "pos_head", "pos_tail", "kernels", "bias", "classes",
            ]
        {
            return Err(CheckpointError::Malformed(format!(
                "unexpected array list {order:?}"
            )));
        }
        let words = take("words")?;
        let pos_head = take("pos_head")?;
        let pos_tail = take("pos_tail")?;
        let kernels = take("kernels")?;
        let bias = take("bias")?.into_vec();
        let classes = take("classes")?;
        let model = RankingModel {
            encoder: EncoderParams {
                shape: header.dims.encoder,
                words,
                pos_head,
                pos_tail,
                kernels,
                bias,
            },
            classes,
            nr: header.dims.nr,
        };
        model
            .check_shapes()
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        Ok(Self {
            model,
            vocab_hash: header.vocab_hash,
            schema_hash: header.schema_hash,
            config: header.config,
            epoch: header.epoch,
        })
    }
}

fn cast_model<A: crate::Real, B: crate::Real>(m: &RankingModel<A>) -> RankingModel<B> {
    let e = &m.encoder;
    RankingModel {
        encoder: EncoderParams {
            shape: e.shape,
            words: e.words.cast(),
            pos_head: e.pos_head.cast(),
            pos_tail: e.pos_tail.cast(),
            kernels: e.kernels.cast(),
            bias: e.bias.iter().map(|&x| B::lit(x.to_f64_lossy())).collect(),
        },
        classes: m.classes.cast(),
        nr: m.nr,
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path)?;
    Checkpoint::from_bytes(&bytes)
}
