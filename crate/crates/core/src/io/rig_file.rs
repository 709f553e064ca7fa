//! Rig asset container.
//!
//! `RIG1`, a `u32` header length, a JSON [`RigHeader`], then little-endian
//! `f32` blobs in order: template (V·3), shape basis (V·3·Rs), expression
//! basis (V·3·Re), joint regressor (K·V), skin weights (V·K); and finally the
//! face list as `u32` triples. Basis entries are indexed `[vertex][coord][i]`.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{join_container, push_f32s, read_bytes, split_container, take, take_f32s, write_bytes};
use crate::error::{Error, Result};
use crate::flame::HeadRig;

pub const RIG_MAGIC: &[u8; 4] = b"RIG1";
pub const RIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigHeader {
    pub version: u32,
    pub n_vertices: usize,
    pub n_joints: usize,
    pub n_faces: usize,
    pub shape_rank: usize,
    pub expr_rank: usize,
    pub joint_names: Vec<String>,
    pub jaw_joint: usize,
    pub head_joint: usize,
    pub parents: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Value>,
}

pub fn encode_rig(rig: &HeadRig, meta: Option<Value>) -> Result<Vec<u8>> {
    let header = RigHeader {
        version: RIG_VERSION,
        n_vertices: rig.n_vertices(),
        n_joints: rig.n_joints(),
        n_faces: rig.faces().len(),
        shape_rank: rig.shape_rank(),
        expr_rank: rig.expr_rank(),
        joint_names: rig.joint_names().to_vec(),
        jaw_joint: rig.jaw_joint(),
        head_joint: rig.head_joint(),
        parents: rig.parents().to_vec(),
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = join_container(RIG_MAGIC, &json, 0);
    for array in [
        rig.template(),
        rig.shape_basis(),
        rig.expr_basis(),
        rig.joint_regressor(),
        rig.skin_weights(),
    ] {
        push_f32s(&mut out, array.iter());
    }
    for f in rig.faces().iter() {
        for i in f {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_rig(bytes: &[u8]) -> Result<(HeadRig, RigHeader)> {
    let (json, payload) = split_container(bytes, RIG_MAGIC)?;
    let h: RigHeader =
        serde_json::from_slice(json).map_err(|e| Error::Header(format!("unreadable rig header: {e}")))?;
    if h.version != RIG_VERSION {
        return Err(Error::Header(format!("unsupported rig version {}", h.version)));
    }
    let (v, k) = (h.n_vertices, h.n_joints);
    let mut cursor = 0;
    let mut blob = |rows: usize, cols: usize| -> Result<Array2<f64>> {
        let values = take_f32s(payload, &mut cursor, rows * cols)?;
        Ok(Array2::from_shape_vec((rows, cols), values).expect("sized"))
    };
    let template = blob(v, 3)?;
    let shape_basis = blob(3 * v, h.shape_rank)?;
    let expr_basis = blob(3 * v, h.expr_rank)?;
    let joint_regressor = blob(k, v)?;
    let skin_weights = blob(v, k)?;
    let face_bytes = take(payload, &mut cursor, h.n_faces * 12)?;
    if cursor != payload.len() {
        return Err(Error::shape("rig payload bytes", cursor, payload.len()));
    }
    let faces = face_bytes
        .chunks_exact(12)
        .map(|c| {
            let idx = |o: usize| u32::from_le_bytes(c[o..o + 4].try_into().expect("4 bytes"));
            [idx(0), idx(4), idx(8)]
        })
        .collect();
    let rig = HeadRig::new(
        template,
        faces,
        shape_basis,
        expr_basis,
        joint_regressor,
        skin_weights,
        h.parents.clone(),
        h.joint_names.clone(),
        h.jaw_joint,
        h.head_joint,
    )?;
    Ok((rig, h))
}

pub fn write_rig(path: impl AsRef<Path>, rig: &HeadRig, meta: Option<Value>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_rig(rig, meta)?)
}

pub fn read_rig(path: impl AsRef<Path>) -> Result<HeadRig> {
    Ok(decode_rig(&read_bytes(path.as_ref())?)?.0)
}
