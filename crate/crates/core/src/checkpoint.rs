//! Binary checkpoint files: magic, version, a JSON header, then raw
//! little-endian f32 tensors in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Variant};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::trainer::{EpochRecord, TrainConfig};

pub const MAGIC: &[u8; 8] = b"ABLRCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub train_config: TrainConfig,
    pub model_config: ModelConfig,
    /// Epoch the parameters were taken from.
    pub epoch: usize,
    /// Epoch log with wall-clock times zeroed, so reruns write identical files.
    pub history: Vec<EpochRecord>,
    pub params: ParamStore<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    /// Bytes from the start of the payload.
    offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    train_config: TrainConfig,
    model_config: ModelConfig,
    epoch: usize,
    history: Vec<EpochRecord>,
    tensors: Vec<TensorEntry>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::with_capacity(self.params.len());
        let mut offset = 0u64;
        for (_, name, t) in self.params.iter() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: t.shape(),
                offset,
            });
            offset += 4 * t.len() as u64;
        }
        let header = Header {
            train_config: self.train_config.clone(),
            model_config: self.model_config.clone(),
            epoch: self.epoch,
            history: self.history.clone(),
            tensors,
        };
        let header = serde_json::to_vec(&header).expect("plain data");
        let mut out = Vec::with_capacity(20 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, t) in self.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Rejects anything that does not match the layout implied by the
    /// stored model configuration.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}, expected {VERSION}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if header_len > body.len() {
            return Err(corrupt("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..header_len]).map_err(|e| corrupt(format!("bad header: {e}")))?;
        let payload = &body[header_len..];

        let template =
            Model::<f32>::new(header.model_config.clone(), 0).map_err(|e| corrupt(format!("bad model config: {e}")))?;
        if header.tensors.len() != template.store.len() {
            return Err(corrupt(format!(
                "header lists {} tensors, the {} layout has {}",
                header.tensors.len(),
                header.model_config.variant,
                template.store.len()
            )));
        }
        let mut params = ParamStore::new();
        let mut expected_offset = 0u64;
        for (entry, (_, name, t)) in header.tensors.iter().zip(template.store.iter()) {
            if entry.name != name || entry.shape != t.shape() {
                return Err(corrupt(format!(
                    "tensor `{}` {:?} does not match expected `{name}` {:?}",
                    entry.name,
                    entry.shape,
                    t.shape()
                )));
            }
            if entry.offset != expected_offset {
                return Err(corrupt(format!(
                    "tensor `{name}` at offset {}, expected {expected_offset}",
                    entry.offset
                )));
            }
            let n = t.len();
            let start = entry.offset as usize;
            let end = start + 4 * n;
            if end > payload.len() {
                return Err(corrupt(format!("payload truncated inside tensor `{name}`")));
            }
            let data = payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            params.add(name, Tensor::from_vec(t.rows(), t.cols(), data)?)?;
            expected_offset = end as u64;
        }
        if expected_offset as usize != payload.len() {
            return Err(corrupt(format!(
                "{} trailing payload bytes",
                payload.len() - expected_offset as usize
            )));
        }
        Ok(Checkpoint {
            train_config: header.train_config,
            model_config: header.model_config,
            epoch: header.epoch,
            history: header.history,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// The stored network, at any precision.
    pub fn model<T: crate::tensor::Real>(&self) -> Result<Model<T>> {
        let mut m = Model::<f32>::new(self.model_config.clone(), 0)?;
        for id in m.store.ids().collect::<Vec<_>>() {
            let name = m.store.name(id).to_string();
            let src = self
                .params
                .by_name(&name)
                .ok_or_else(|| corrupt(format!("missing tensor `{name}`")))?;
            if src.shape() != m.store.get(id).shape() {
                return Err(corrupt(format!("tensor `{name}` has shape {:?}", src.shape())));
            }
            *m.store.get_mut(id) = src.clone();
        }
        Ok(m.cast())
    }

    /// Like [`Checkpoint::model`] but refuses a checkpoint of another variant.
    pub fn model_for<T: crate::tensor::Real>(&self, variant: Variant) -> Result<Model<T>> {
        if self.model_config.variant != variant {
            return Err(corrupt(format!(
                "checkpoint holds variant {}, but {variant} was requested",
                self.model_config.variant
            )));
        }
        self.model()
    }
}
