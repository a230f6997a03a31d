//! Checkpoint layout: one JSON header line (kind, hyperparameters, tensor
//! names and shapes, training log) followed by every tensor's values as
//! little-endian `f64`, in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cnn::{CnnFusionModel, CnnParams};
use super::mlp::{MlpModel, MlpParams};
use super::tensor::{ParamSet, Tensor};
use super::train::TrainingLog;
use crate::error::{Error, Result};

const FORMAT: &str = "mortality-net/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub kind: String,
    pub hyper: serde_json::Value,
    pub dims: Vec<usize>,
    pub tensors: Vec<TensorSpec>,
    pub log: TrainingLog,
}

pub fn encode_checkpoint(header: &CheckpointHeader, params: &ParamSet) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(header)?;
    out.push(b'\n');
    for t in &params.tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, ParamSet)> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::invalid("checkpoint has no header line"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..split])?;
    if header.format != FORMAT {
        return Err(Error::invalid(format!("unknown checkpoint format `{}`", header.format)));
    }
    let mut body = bytes[split + 1..].chunks_exact(8);
    let mut params = ParamSet::new();
    for spec in &header.tensors {
        let n: usize = spec.shape.iter().product();
        let values: Vec<f64> = body
            .by_ref()
            .take(n)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if values.len() != n {
            return Err(Error::invalid(format!("checkpoint truncated in tensor `{}`", spec.name)));
        }
        params.push(&spec.name, Tensor::from_vec(&spec.shape, values)?);
    }
    if body.next().is_some() || !body.remainder().is_empty() {
        return Err(Error::invalid("checkpoint has trailing bytes"));
    }
    Ok((header, params))
}

fn header(kind: &str, hyper: serde_json::Value, dims: Vec<usize>, params: &ParamSet, log: &TrainingLog) -> CheckpointHeader {
    CheckpointHeader {
        format: FORMAT.into(),
        kind: kind.into(),
        hyper,
        dims,
        tensors: params
            .names
            .iter()
            .zip(&params.tensors)
            .map(|(n, t)| TensorSpec {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        log: log.clone(),
    }
}

fn expect_kind(h: &CheckpointHeader, kind: &str) -> Result<()> {
    if h.kind != kind {
        return Err(Error::invalid(format!("checkpoint holds a `{}`, expected `{kind}`", h.kind)));
    }
    Ok(())
}

fn write(path: &Path, bytes: Vec<u8>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

impl MlpModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = header("mlp", serde_json::to_value(&self.params)?, vec![self.input_dim], &self.weights, &self.log);
        encode_checkpoint(&h, &self.weights)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, weights) = decode_checkpoint(bytes)?;
        expect_kind(&h, "mlp")?;
        let params: MlpParams = serde_json::from_value(h.hyper)?;
        Ok(Self {
            params,
            input_dim: h.dims[0],
            weights,
            log: h.log,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write(path.as_ref(), self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read(path.as_ref())?)
    }
}

impl CnnFusionModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = header(
            "cnn",
            serde_json::to_value(&self.params)?,
            vec![self.vocab_size, self.structured_dim],
            &self.weights,
            &self.log,
        );
        encode_checkpoint(&h, &self.weights)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, weights) = decode_checkpoint(bytes)?;
        expect_kind(&h, "cnn")?;
        let params: CnnParams = serde_json::from_value(h.hyper)?;
        Ok(Self {
            params,
            vocab_size: h.dims[0],
            structured_dim: h.dims[1],
            weights,
            log: h.log,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write(path.as_ref(), self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read(path.as_ref())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::mlp::init_mlp;

    #[test]
    fn mlp_round_trip_and_corruption() {
        let m = MlpModel {
            params: MlpParams::default(),
            input_dim: 3,
            weights: init_mlp(3, 5, 1),
            log: TrainingLog::default(),
        };
        let bytes = m.to_bytes().unwrap();
        assert_eq!(MlpModel::from_bytes(&bytes).unwrap(), m);
        assert!(MlpModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(CnnFusionModel::from_bytes(&bytes).is_err());
    }
}
