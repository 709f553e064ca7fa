use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ModelConfig;
use super::weights::ModelWeights;
use crate::error::{Error, Result};
use crate::io::{join_container, push_f32s, read_bytes, split_container, take_f32s, write_bytes};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TKW1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset into the payload.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Value>,
}

/// `TKW1 | u32 header length | JSON header | f32 LE tensors in manifest order`.
pub fn encode_checkpoint(weights: &ModelWeights, meta: Option<Value>) -> Result<Vec<u8>> {
    let mut offset = 0;
    let tensors = weights
        .names()
        .iter()
        .zip(weights.tensors())
        .map(|(name, t)| {
            let e = TensorEntry {
                name: name.clone(),
                shape: [t.nrows(), t.ncols()],
                offset,
            };
            offset += t.len() * 4;
            e
        })
        .collect();
    let header = CheckpointHeader {
        config: weights.config().clone(),
        tensors,
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = join_container(CHECKPOINT_MAGIC, &json, offset);
    for t in weights.tensors() {
        push_f32s(&mut out, t.iter());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelWeights, CheckpointHeader)> {
    let (json, payload) = split_container(bytes, CHECKPOINT_MAGIC)?;
    let header: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| Error::Header(format!("checkpoint header: {e}")))?;
    let mut cursor = 0;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        if entry.offset != cursor {
            return Err(Error::Header(format!(
                "tensor `{}` at offset {}, expected {cursor}",
                entry.name, entry.offset
            )));
        }
        let [r, c] = entry.shape;
        let values = take_f32s(payload, &mut cursor, r * c)?;
        let t = Array2::from_shape_vec((r, c), values).expect("length checked by take_f32s");
        tensors.push((entry.name.clone(), t));
    }
    if cursor != payload.len() {
        return Err(Error::shape("checkpoint payload bytes", cursor, payload.len()));
    }
    let weights = ModelWeights::from_tensors(&header.config, tensors)?;
    Ok((weights, header))
}

pub fn write_checkpoint(path: impl AsRef<Path>, weights: &ModelWeights, meta: Option<Value>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_checkpoint(weights, meta)?)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(ModelWeights, CheckpointHeader)> {
    decode_checkpoint(&read_bytes(path.as_ref())?)
}
