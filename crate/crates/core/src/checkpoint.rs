//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "HCNN"  u32 version (= 1)  u32 header_len  header (JSON, header_len bytes)
//! f32 parameter data, tensors in manifest order
//! ```
//!
//! The header holds the model config, the parameter manifest (names and
//! shapes), the run seed and the epoch the checkpoint was taken at.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ParamInfo};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"HCNN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub params: Vec<ParamInfo>,
    pub seed: u64,
    pub epoch: usize,
}

/// Serializes parameters as 32-bit floats.
pub fn to_bytes<T: Scalar>(model: &Model<T>, seed: u64, epoch: usize) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        model: model.config().clone(),
        params: model.param_manifest(),
        seed,
        epoch,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * model.num_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let len = u32::try_from(json.len()).map_err(|_| Error::Checkpoint("header too large".into()))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        for v in p.data() {
            out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<(Model<T>, CheckpointHeader)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(Error::Checkpoint(format!("truncated preamble ({} bytes)", bytes.len())));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = word(8) as usize;
    let body = &bytes[12..];
    if header_len > body.len() {
        return Err(Error::Checkpoint(format!(
            "header length {header_len} exceeds remaining {} bytes",
            body.len()
        )));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&body[..header_len]).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let blob = &body[header_len..];
    let expected: usize = header.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if blob.len() != 4 * expected {
        return Err(Error::Checkpoint(format!(
            "parameter data is {} bytes, manifest needs {}",
            blob.len(),
            4 * expected
        )));
    }
    let mut floats = blob
        .chunks_exact(4)
        .map(|c| T::from_f64_lossy(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64));
    let mut params = Vec::with_capacity(header.params.len());
    for info in &header.params {
        let n: usize = info.shape.iter().product();
        params.push(Tensor::new(info.shape.clone(), floats.by_ref().take(n).collect())?);
    }
    let model = Model::from_params(header.model.clone(), params).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if model.param_manifest() != header.params {
        return Err(Error::Checkpoint("parameter manifest does not match the model config".into()));
    }
    Ok((model, header))
}

pub fn save<T: Scalar>(model: &Model<T>, seed: u64, epoch: usize, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model, seed, epoch)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<(Model<T>, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
