//! Checkpoint container.
//!
//! A checkpoint is a single JSON document:
//!
//! ```text
//! {
//!   "format": "remixer-checkpoint",
//!   "version": 1,
//!   "variant": "baseline" | "model1" | "model2",
//!   "loss_weights": { "psi": f64, "lambda": f64 },
//!   "labels": [string; K],
//!   "config": ModelConfig,
//!   "metadata": { "seed", "best_epoch", "epochs_run", "stop_reason", "loss_curve": [...] },
//!   "tensors": [ { "name": string, "shape": [usize], "data": base64 } ]
//! }
//! ```
//!
//! Tensor data is the little-endian IEEE-754 binary64 encoding of the values
//! in row-major order, base64 encoded, so parameters round-trip bit-exactly.
//! Tensors appear in the canonical parameter order.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::forward::Variant;
use super::params::{ModelConfig, ModelParams};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::training::LossWeights;

pub const CHECKPOINT_FORMAT: &str = "remixer-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stop_reason: String,
    pub loss_curve: Vec<EpochLoss>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub variant: Variant,
    pub loss_weights: LossWeights,
    pub labels: Vec<String>,
    pub params: ModelParams,
    pub metadata: TrainMetadata,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    variant: Variant,
    loss_weights: LossWeights,
    labels: Vec<String>,
    config: ModelConfig,
    metadata: TrainMetadata,
    tensors: Vec<TensorRecord>,
}

fn encode_values(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

fn decode_values(name: &str, text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("tensor {name}: {} bytes is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl Checkpoint {
    pub fn new(variant: Variant, loss_weights: LossWeights, labels: Vec<String>, params: ModelParams) -> Self {
        Checkpoint {
            variant,
            loss_weights,
            labels,
            params,
            metadata: TrainMetadata::default(),
        }
    }

    pub fn k(&self) -> usize {
        self.params.config.k
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let doc = Document {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            variant: self.variant,
            loss_weights: self.loss_weights,
            labels: self.labels.clone(),
            config: self.params.config.clone(),
            metadata: self.metadata.clone(),
            tensors: self
                .params
                .named()
                .into_iter()
                .map(|(name, t)| TensorRecord {
                    name,
                    shape: t.shape().to_vec(),
                    data: encode_values(t.data()),
                })
                .collect(),
        };
        serde_json::to_vec_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let doc: Document = serde_json::from_slice(bytes)
            .map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("not a checkpoint (format {:?})", doc.format)));
        }
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", doc.version)));
        }
        if doc.labels.len() != doc.config.k {
            return Err(Error::Format(format!(
                "{} labels for a {}-source model",
                doc.labels.len(),
                doc.config.k
            )));
        }
        let named = doc
            .tensors
            .into_iter()
            .map(|r| {
                let data = decode_values(&r.name, &r.data)?;
                let t = Tensor::new(r.shape, data).map_err(|e| Error::Format(format!("tensor {}: {e}", r.name)))?;
                Ok((r.name, t))
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParams::from_named(doc.config, named)?;
        Ok(Checkpoint {
            variant: doc.variant,
            loss_weights: doc.loss_weights,
            labels: doc.labels,
            params,
            metadata: doc.metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
