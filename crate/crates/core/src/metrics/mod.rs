//! Mesh-sequence error metrics and head-motion beat alignment.

mod beat;
mod vertex;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::BeatTrack;
use crate::error::{Error, Result};

pub use beat::{beat_align, beat_distance, motion_beats, DEFAULT_BEAT_SIGMA, DEFAULT_MOTION_SEPARATION};
pub use vertex::{lve, mve, ufdd, ufve, LipAggregate, RegionMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub lip_aggregate: LipAggregate,
    pub sigma_frames: f64,
    pub motion_min_separation: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            lip_aggregate: LipAggregate::Mean,
            sigma_frames: DEFAULT_BEAT_SIGMA,
            motion_min_separation: DEFAULT_MOTION_SEPARATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub lve: f64,
    pub mve: f64,
    pub ufve: f64,
    pub ufdd: f64,
    /// Kernel beat alignment; absent when the audio has no beats.
    pub ba: Option<f64>,
    /// Mean frame gap from audio beats to the nearest motion beat.
    pub beat_distance: Option<f64>,
    pub n_frames: usize,
    pub n_audio_beats: usize,
    pub n_motion_beats: usize,
    pub config: MetricsConfig,
}

/// Everything `evaluate` needs besides the config.
pub struct EvalInput<'a> {
    pub pred: &'a [Array2<f64>],
    pub gt: &'a [Array2<f64>],
    /// Head rotation of the predicted sequence (N×3), for motion beats.
    pub pred_head_pose: &'a Array2<f64>,
    pub mask: &'a RegionMask,
    pub audio_beats: &'a BeatTrack,
    pub fps: f64,
}

pub fn evaluate(input: &EvalInput<'_>, config: &MetricsConfig) -> Result<MetricsReport> {
    if let Some(v) = input.gt.first().map(|f| f.nrows()) {
        input.mask.validate(v)?;
    }
    let motion = motion_beats(input.pred_head_pose, input.fps, config.motion_min_separation)?;
    let ba = if input.audio_beats.is_empty() {
        log::warn!("audio has no beats; beat alignment is undefined");
        None
    } else {
        Some(beat_align(input.audio_beats, &motion, config.sigma_frames)?)
    };
    Ok(MetricsReport {
        lve: lve(input.pred, input.gt, input.mask, config.lip_aggregate)?,
        mve: mve(input.pred, input.gt)?,
        ufve: ufve(input.pred, input.gt, input.mask)?,
        ufdd: ufdd(input.pred, input.gt, input.mask)?,
        ba,
        beat_distance: beat_distance(input.audio_beats, &motion),
        n_frames: input.pred.len(),
        n_audio_beats: input.audio_beats.len(),
        n_motion_beats: motion.len(),
        config: *config,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "lve,mve,ufve,ufdd,ba,beat_distance,n_frames,n_audio_beats,n_motion_beats";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.lve,
            self.mve,
            self.ufve,
            self.ufdd,
            opt(self.ba),
            opt(self.beat_distance),
            self.n_frames,
            self.n_audio_beats,
            self.n_motion_beats
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}
