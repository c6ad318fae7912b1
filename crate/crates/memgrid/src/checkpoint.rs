//! Versioned checkpoint files for trained networks.
//!
//! A checkpoint is a self-describing JSON document: named tensors carry their
//! shape plus a flat row-major array, and each network records its layer
//! structure so an alternate-language loader can rebuild it without this
//! crate. Numbers are serialized with shortest-round-trip formatting, so a
//! save/load cycle reproduces eval-mode outputs bit-identically.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::neural::{Activation, BatchNorm, DenseNetwork, Layer, Matrix};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint schema error: {0}")]
    Schema(String),
}

/// Shape metadata plus flat row-major data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn validate(&self, name: &str) -> Result<(), CheckpointError> {
        let n: usize = self.shape.iter().product();
        if n != self.data.len() {
            return Err(CheckpointError::Schema(format!(
                "tensor {name}: shape {:?} implies {n} elements, found {}",
                self.shape,
                self.data.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub activation: Activation,
    pub batch_norm: bool,
}

/// One serialized network: layer structure plus its named tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub layers: Vec<LayerRecord>,
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub networks: BTreeMap<String, NetworkRecord>,
    /// Training metadata: seed, episode count, hyperparameters.
    pub metadata: Value,
}

impl Checkpoint {
    pub fn new(metadata: Value) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            networks: BTreeMap::new(),
            metadata,
        }
    }

    pub fn insert_network(&mut self, name: &str, net: &DenseNetwork) {
        let mut tensors = BTreeMap::new();
        let mut layers = Vec::with_capacity(net.layers.len());
        for (i, layer) in net.layers.iter().enumerate() {
            tensors.insert(
                format!("{name}.layer{i}.weight"),
                Tensor {
                    shape: vec![layer.weight.rows, layer.weight.cols],
                    data: layer.weight.data.clone(),
                },
            );
            tensors.insert(
                format!("{name}.layer{i}.bias"),
                Tensor {
                    shape: vec![layer.bias.len()],
                    data: layer.bias.clone(),
                },
            );
            if let Some(bn) = &layer.batch_norm {
                for (suffix, data) in [
                    ("bn_gamma", &bn.gamma),
                    ("bn_beta", &bn.beta),
                    ("bn_running_mean", &bn.running_mean),
                    ("bn_running_var", &bn.running_var),
                ] {
                    tensors.insert(
                        format!("{name}.layer{i}.{suffix}"),
                        Tensor {
                            shape: vec![data.len()],
                            data: data.clone(),
                        },
                    );
                }
            }
            layers.push(LayerRecord {
                activation: layer.activation,
                batch_norm: layer.batch_norm.is_some(),
            });
        }
        self.networks.insert(name.to_string(), NetworkRecord { layers, tensors });
    }

    pub fn network(&self, name: &str) -> Result<DenseNetwork, CheckpointError> {
        let record = self
            .networks
            .get(name)
            .ok_or_else(|| CheckpointError::Schema(format!("missing network {name:?}")))?;
        let tensor = |key: &str| -> Result<&Tensor, CheckpointError> {
            let t = record
                .tensors
                .get(key)
                .ok_or_else(|| CheckpointError::Schema(format!("missing tensor {key:?}")))?;
            t.validate(key)?;
            Ok(t)
        };
        let mut layers = Vec::with_capacity(record.layers.len());
        for (i, lr) in record.layers.iter().enumerate() {
            let w = tensor(&format!("{name}.layer{i}.weight"))?;
            if w.shape.len() != 2 {
                return Err(CheckpointError::Schema(format!(
                    "{name}.layer{i}.weight: expected rank-2 shape, got {:?}",
                    w.shape
                )));
            }
            let b = tensor(&format!("{name}.layer{i}.bias"))?;
            let batch_norm = if lr.batch_norm {
                let gamma = tensor(&format!("{name}.layer{i}.bn_gamma"))?.data.clone();
                let beta = tensor(&format!("{name}.layer{i}.bn_beta"))?.data.clone();
                let running_mean = tensor(&format!("{name}.layer{i}.bn_running_mean"))?
                    .data
                    .clone();
                let running_var = tensor(&format!("{name}.layer{i}.bn_running_var"))?
                    .data
                    .clone();
                let mut bn = BatchNorm::new(gamma.len());
                bn.gamma = gamma;
                bn.beta = beta;
                bn.running_mean = running_mean;
                bn.running_var = running_var;
                Some(bn)
            } else {
                None
            };
            layers.push(Layer {
                weight: Matrix {
                    rows: w.shape[0],
                    cols: w.shape[1],
                    data: w.data.clone(),
                },
                bias: b.data.clone(),
                activation: lr.activation,
                batch_norm,
            });
        }
        Ok(DenseNetwork { layers })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path)?;
        // Check the version before strict parsing so version skew yields a
        // version error, not a schema error.
        let probe: Value = serde_json::from_str(&text)?;
        let found = probe
            .get("version")
            .and_then(Value::as_u64)
            .ok_or_else(|| CheckpointError::Schema("missing version field".into()))?
            as u32;
        if found != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found,
                expected: CHECKPOINT_VERSION,
            });
        }
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        for (name, record) in &ckpt.networks {
            for (key, tensor) in &record.tensors {
                tensor.validate(&format!("{name}/{key}"))?;
            }
        }
        Ok(ckpt)
    }
}
