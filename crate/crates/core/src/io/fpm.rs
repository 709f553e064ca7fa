//! Framed tensor files.
//!
//! Layout: the four bytes `FPM1`, a little-endian `u32` header length, a JSON
//! header, then `n_frames × n_cols` little-endian `f32` values in row-major
//! order. The header carries what the rows mean: a parameter sequence (with
//! block sizes, layout and, for differential data, the reference frame), a
//! feature track (with its kind) or a plain table.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{join_container, push_f32s, read_bytes, split_container, take_f32s, write_bytes};
use crate::audio::{FeatureTrack, TrackKind};
use crate::error::{Error, Result};
use crate::flame::{ParamSequence, SequenceLayout, StateLayout};

pub const FPM_MAGIC: &[u8; 4] = b"FPM1";
pub const FPM_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FpmContent {
    Params,
    Track,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpmHeader {
    pub version: u32,
    pub content: FpmContent,
    pub fps: f64,
    pub n_frames: usize,
    pub n_cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<SequenceLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<StateLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<TrackKind>,
    /// Producer information (command, config, seed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Value>,
}

impl FpmHeader {
    pub fn table(fps: f64, n_frames: usize, n_cols: usize) -> Self {
        Self {
            version: FPM_VERSION,
            content: FpmContent::Table,
            fps,
            n_frames,
            n_cols,
            layout: None,
            dims: None,
            reference: None,
            kind: None,
            meta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramedTensor {
    pub header: FpmHeader,
    pub data: Array2<f64>,
}

pub fn encode_framed(header: &FpmHeader, data: &Array2<f64>) -> Result<Vec<u8>> {
    if data.dim() != (header.n_frames, header.n_cols) {
        return Err(Error::shape(
            "framed tensor body",
            format!("({}, {})", header.n_frames, header.n_cols),
            format!("{:?}", data.dim()),
        ));
    }
    let json = serde_json::to_vec(header)?;
    let mut out = join_container(FPM_MAGIC, &json, data.len() * 4);
    push_f32s(&mut out, data.iter());
    Ok(out)
}

pub fn decode_framed(bytes: &[u8]) -> Result<FramedTensor> {
    let (json, payload) = split_container(bytes, FPM_MAGIC)?;
    let header: FpmHeader =
        serde_json::from_slice(json).map_err(|e| Error::Header(format!("unreadable JSON header: {e}")))?;
    if header.version != FPM_VERSION {
        return Err(Error::Header(format!("unsupported version {}", header.version)));
    }
    let count = header
        .n_frames
        .checked_mul(header.n_cols)
        .ok_or_else(|| Error::Header("tensor size overflows".into()))?;
    let mut cursor = 0;
    let values = take_f32s(payload, &mut cursor, count)?;
    if cursor != payload.len() {
        return Err(Error::shape("framed tensor payload bytes", count * 4, payload.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("framed tensor payload".into()));
    }
    let data = Array2::from_shape_vec((header.n_frames, header.n_cols), values).expect("count checked");
    Ok(FramedTensor { header, data })
}

pub fn read_framed(path: impl AsRef<Path>) -> Result<FramedTensor> {
    decode_framed(&read_bytes(path.as_ref())?)
}

pub fn write_framed(path: impl AsRef<Path>, header: &FpmHeader, data: &Array2<f64>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_framed(header, data)?)
}

fn sequence_header(seq: &ParamSequence, meta: Option<Value>) -> FpmHeader {
    FpmHeader {
        version: FPM_VERSION,
        content: FpmContent::Params,
        fps: seq.fps(),
        n_frames: seq.n_rows(),
        n_cols: seq.dims().total(),
        layout: Some(seq.layout()),
        dims: Some(seq.dims()),
        reference: seq.reference().map(|r| r.to_vec()),
        kind: None,
        meta,
    }
}

pub fn write_sequence(path: impl AsRef<Path>, seq: &ParamSequence, meta: Option<Value>) -> Result<()> {
    write_framed(path, &sequence_header(seq, meta), seq.frames())
}

impl FramedTensor {
    pub fn from_sequence(seq: &ParamSequence, meta: Option<Value>) -> Self {
        Self {
            header: sequence_header(seq, meta),
            data: seq.frames().clone(),
        }
    }

    pub fn into_sequence(self) -> Result<ParamSequence> {
        let h = self.header;
        if h.content != FpmContent::Params {
            return Err(Error::Header(format!(
                "expected parameter content, found {:?}",
                h.content
            )));
        }
        let dims = h
            .dims
            .ok_or_else(|| Error::Header("parameter file without dims".into()))?;
        if dims.total() != h.n_cols {
            return Err(Error::shape("parameter file columns", dims.total(), h.n_cols));
        }
        match h
            .layout
            .ok_or_else(|| Error::Header("parameter file without layout".into()))?
        {
            SequenceLayout::Absolute => ParamSequence::absolute(self.data, h.fps, dims),
            SequenceLayout::Differential => {
                let reference = h
                    .reference
                    .ok_or_else(|| Error::Header("differential file without reference".into()))?;
                ParamSequence::differential(self.data, h.fps, dims, Array1::from(reference))
            }
        }
    }

    pub fn into_track(self) -> Result<FeatureTrack> {
        let h = self.header;
        if h.content != FpmContent::Track {
            return Err(Error::Header(format!("expected track content, found {:?}", h.content)));
        }
        let kind = h.kind.ok_or_else(|| Error::Header("track file without kind".into()))?;
        FeatureTrack::new(self.data, h.fps, kind)
    }
}

pub fn read_sequence(path: impl AsRef<Path>) -> Result<ParamSequence> {
    read_framed(path)?.into_sequence()
}

pub fn write_track(path: impl AsRef<Path>, track: &FeatureTrack, meta: Option<Value>) -> Result<()> {
    let header = FpmHeader {
        content: FpmContent::Track,
        kind: Some(track.kind()),
        meta,
        ..FpmHeader::table(track.fps(), track.n_frames(), track.dim())
    };
    write_framed(path, &header, track.values())
}

pub fn read_track(path: impl AsRef<Path>) -> Result<FeatureTrack> {
    read_framed(path)?.into_track()
}

/// Plain N×C table (trajectories, expression sessions).
pub fn write_table(path: impl AsRef<Path>, data: &Array2<f64>, fps: f64, meta: Option<Value>) -> Result<()> {
    let header = FpmHeader {
        meta,
        ..FpmHeader::table(fps, data.nrows(), data.ncols())
    };
    write_framed(path, &header, data)
}

/// Reads the body of any framed tensor file.
pub fn read_table(path: impl AsRef<Path>) -> Result<(Array2<f64>, FpmHeader)> {
    let t = read_framed(path)?;
    Ok((t.data, t.header))
}
