use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::params::{FlameParams, StateLayout};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceLayout {
    Absolute,
    Differential,
}

/// A frame-major parameter matrix.
///
/// Absolute sequences hold one row per frame. Differential sequences hold
/// offsets from `reference` for frames `1..=N`; the reference itself is frame 0
/// and is not stored as a row, so a single-frame clip has an empty body.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSequence {
    frames: Array2<f64>,
    fps: f64,
    layout: SequenceLayout,
    dims: StateLayout,
    reference: Option<Array1<f64>>,
}

impl ParamSequence {
    pub fn absolute(frames: Array2<f64>, fps: f64, dims: StateLayout) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::Empty("absolute sequence"));
        }
        let seq = Self {
            frames,
            fps,
            layout: SequenceLayout::Absolute,
            dims,
            reference: None,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn differential(frames: Array2<f64>, fps: f64, dims: StateLayout, reference: Array1<f64>) -> Result<Self> {
        let seq = Self {
            frames,
            fps,
            layout: SequenceLayout::Differential,
            dims,
            reference: Some(reference),
        };
        seq.validate()?;
        Ok(seq)
    }

    fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Invalid(format!("fps must be positive, got {}", self.fps)));
        }
        if self.frames.ncols() != self.dims.total() {
            return Err(Error::shape(
                "ParamSequence columns",
                self.dims.total(),
                self.frames.ncols(),
            ));
        }
        if self.frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ParamSequence frames".into()));
        }
        if let Some(r) = &self.reference {
            if r.len() != self.dims.total() {
                return Err(Error::shape("ParamSequence reference", self.dims.total(), r.len()));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("ParamSequence reference".into()));
            }
        }
        Ok(())
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut Array2<f64> {
        &mut self.frames
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    /// Number of stored rows.
    pub fn n_rows(&self) -> usize {
        self.frames.nrows()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn layout(&self) -> SequenceLayout {
        self.layout
    }

    pub fn dims(&self) -> StateLayout {
        self.dims
    }

    pub fn reference(&self) -> Option<&Array1<f64>> {
        self.reference.as_ref()
    }

    /// Canonical parameters of stored row `i`.
    pub fn params(&self, i: usize) -> Result<FlameParams> {
        if i >= self.n_rows() {
            return Err(Error::Invalid(format!(
                "row {i} out of range for {} rows",
                self.n_rows()
            )));
        }
        let row = self.frames.row(i);
        FlameParams::from_row(row.as_slice().expect("standard layout"), &self.dims)
    }

    /// Head rotation columns (N×3).
    pub fn head_pose(&self) -> Array2<f64> {
        self.frames.slice(s![.., self.dims.head_range()]).to_owned()
    }
}

/// Offsets of frames `1..N` from frame 0, which becomes the reference.
pub fn to_differential(seq: &ParamSequence) -> Result<ParamSequence> {
    if seq.layout != SequenceLayout::Absolute {
        return Err(Error::Invalid("to_differential expects an absolute sequence".into()));
    }
    if seq.n_rows() == 0 {
        return Err(Error::Empty("to_differential input"));
    }
    let reference = seq.frames.row(0).to_owned();
    let body = &seq.frames.slice(s![1.., ..]) - &reference.view().insert_axis(Axis(0));
    ParamSequence::differential(body, seq.fps, seq.dims, reference)
}

/// Reference followed by reference-plus-offset for each stored row.
pub fn to_absolute(seq: &ParamSequence) -> Result<ParamSequence> {
    if seq.layout != SequenceLayout::Differential {
        return Err(Error::Invalid("to_absolute expects a differential sequence".into()));
    }
    let reference = seq
        .reference
        .as_ref()
        .ok_or_else(|| Error::Invalid("differential sequence has no reference".into()))?;
    let mut frames = Array2::zeros((seq.n_rows() + 1, seq.dims.total()));
    frames.row_mut(0).assign(reference);
    for (i, row) in seq.frames.rows().into_iter().enumerate() {
        let mut out = frames.row_mut(i + 1);
        out.assign(reference);
        out += &row;
    }
    ParamSequence::absolute(frames, seq.fps, seq.dims)
}
