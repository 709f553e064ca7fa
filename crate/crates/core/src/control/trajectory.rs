use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flame::ParamSequence;

/// Default per-axis bound on head-rotation offsets, radians.
pub const DEFAULT_POSE_CLAMP: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Still,
    Sway,
    Nod,
    Arc,
    Rotate,
}

/// Rotation axis of the head: pitch about x, yaw about y, roll about z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseAxis {
    Pitch,
    Yaw,
    Roll,
}

impl PoseAxis {
    pub fn column(self) -> usize {
        match self {
            PoseAxis::Pitch => 0,
            PoseAxis::Yaw => 1,
            PoseAxis::Roll => 2,
        }
    }
}

/// Deterministic head-pose offset generator.
///
/// `sway`/`nod`: `amplitude * sin(2 pi t / period + phase)`.
/// `arc`: raised-cosine sweep from 0 to `amplitude` over one `period`, then held.
/// `rotate`: `amplitude` radians per `period`, linear in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub axis: PoseAxis,
    pub amplitude: f64,
    /// Seconds.
    pub period: f64,
    pub phase: f64,
    /// Symmetric bound per axis (pitch, yaw, roll).
    pub clamp: [f64; 3],
}

impl TrajectorySpec {
    pub fn preset(kind: TrajectoryKind) -> Self {
        let (axis, amplitude, period) = match kind {
            TrajectoryKind::Still => (PoseAxis::Yaw, 0.0, 1.0),
            TrajectoryKind::Sway => (PoseAxis::Yaw, 0.2, 2.0),
            TrajectoryKind::Nod => (PoseAxis::Pitch, 0.1, 1.2),
            TrajectoryKind::Arc => (PoseAxis::Yaw, 0.3, 2.0),
            TrajectoryKind::Rotate => (PoseAxis::Roll, 0.1, 1.0),
        };
        Self {
            kind,
            axis,
            amplitude,
            period,
            phase: 0.0,
            clamp: [DEFAULT_POSE_CLAMP; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Invalid(format!(
                "trajectory amplitude must be >= 0, got {}",
                self.amplitude
            )));
        }
        if self.kind != TrajectoryKind::Still && !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Invalid(format!(
                "trajectory period must be > 0, got {}",
                self.period
            )));
        }
        if !self.phase.is_finite() {
            return Err(Error::NonFinite("trajectory phase".into()));
        }
        if self.clamp.iter().any(|c| c.is_nan() || *c < 0.0) {
            return Err(Error::Invalid(format!(
                "trajectory clamp must be >= 0, got {:?}",
                self.clamp
            )));
        }
        Ok(())
    }

    fn value(&self, t: f64) -> f64 {
        match self.kind {
            TrajectoryKind::Still => 0.0,
            TrajectoryKind::Sway | TrajectoryKind::Nod => self.amplitude * (TAU * t / self.period + self.phase).sin(),
            TrajectoryKind::Arc => {
                let u = (t / self.period).min(1.0);
                self.amplitude * 0.5 * (1.0 - (PI * u).cos())
            }
            TrajectoryKind::Rotate => self.amplitude * t / self.period,
        }
    }
}

impl FromStr for TrajectorySpec {
    type Err = Error;

    /// `kind[,key=value...]` with keys `axis`, `amplitude`, `period`, `phase`,
    /// `clamp` (one bound for all axes); unspecified keys take the preset values.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(',').map(str::trim);
        let kind_str = parts.next().unwrap_or_default();
        let kind: TrajectoryKind = serde_json::from_value(serde_json::Value::String(kind_str.to_ascii_lowercase()))
            .map_err(|_| Error::Invalid(format!("unknown trajectory kind '{kind_str}'")))?;
        let mut spec = Self::preset(kind);
        for part in parts.filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("trajectory option '{part}' is not key=value")))?;
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("trajectory option {key}: '{value}' is not a number")))
            };
            match key {
                "axis" => {
                    spec.axis = serde_json::from_value(serde_json::Value::String(value.to_ascii_lowercase()))
                        .map_err(|_| Error::Invalid(format!("unknown axis '{value}'")))?
                }
                "amplitude" => spec.amplitude = num()?,
                "period" => spec.period = num()?,
                "phase" => spec.phase = num()?,
                "clamp" => spec.clamp = [num()?; 3],
                _ => return Err(Error::Invalid(format!("unknown trajectory option '{key}'"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// N×3 head-rotation offsets; frame `i` sits at time `i / fps`.
pub fn gen_trajectory(spec: &TrajectorySpec, n_frames: usize, fps: f64) -> Result<Array2<f64>> {
    spec.validate()?;
    if n_frames == 0 {
        return Err(Error::Empty("trajectory frames"));
    }
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::Invalid(format!("fps must be positive, got {fps}")));
    }
    let col = spec.axis.column();
    let bound = spec.clamp[col];
    let mut out = Array2::zeros((n_frames, 3));
    for i in 0..n_frames {
        out[[i, col]] = spec.value(i as f64 / fps).clamp(-bound, bound);
    }
    Ok(out)
}

/// Adds `traj` (one row per stored row) to the head-rotation columns.
pub fn superimpose(seq: &ParamSequence, traj: &Array2<f64>) -> Result<ParamSequence> {
    if traj.dim() != (seq.n_rows(), 3) {
        return Err(Error::shape(
            "trajectory",
            format!("({}, 3)", seq.n_rows()),
            format!("{:?}", traj.dim()),
        ));
    }
    if traj.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("trajectory".into()));
    }
    let mut out = seq.clone();
    let mut head = out.frames_mut().slice_mut(s![.., seq.dims().head_range()]);
    head += traj;
    Ok(out)
}
