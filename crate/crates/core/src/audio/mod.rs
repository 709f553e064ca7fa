//! Frame-aligned conditioning tracks derived from speech audio.

pub(crate) mod beats;
mod envelope;
mod resample;
mod spectral;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use beats::{audio_beats, onset_strength, BeatDetectorConfig};
pub use envelope::{amplitude_envelope, EnvelopeConfig, EnvelopeMode, CONDITIONING_ENVELOPE};
pub use resample::resample_track;
pub use spectral::{band_energies, BandConfig};

/// Sample rate every loaded waveform is converted to.
pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

/// Mono audio in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Invalid("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Linear-interpolation resampling to `target` Hz.
    pub fn resample(&self, target: u32) -> Result<Self> {
        if target == 0 {
            return Err(Error::Invalid("target sample rate must be positive".into()));
        }
        if target == self.sample_rate || self.samples.is_empty() {
            return Ok(Self {
                samples: self.samples.clone(),
                sample_rate: target,
            });
        }
        let n_out = ((self.samples.len() as u64 * target as u64) / self.sample_rate as u64).max(1) as usize;
        let ratio = self.sample_rate as f64 / target as f64;
        let last = self.samples.len() - 1;
        let samples = (0..n_out)
            .map(|i| {
                let pos = i as f64 * ratio;
                let lo = (pos.floor() as usize).min(last);
                let hi = (lo + 1).min(last);
                let frac = pos - lo as f64;
                self.samples[lo] * (1.0 - frac) + self.samples[hi] * frac
            })
            .collect();
        Ok(Self {
            samples,
            sample_rate: target,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackKind {
    Linguistic,
    Amplitude,
    Emotion,
}

/// Frame-aligned feature matrix (N×d).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    values: Array2<f64>,
    fps: f64,
    kind: TrackKind,
}

impl FeatureTrack {
    pub fn new(values: Array2<f64>, fps: f64, kind: TrackKind) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Empty("feature track"));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Invalid(format!("fps must be positive, got {fps}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{kind:?} track")));
        }
        if kind == TrackKind::Amplitude {
            if values.ncols() != 1 {
                return Err(Error::shape("amplitude track columns", 1, values.ncols()));
            }
            if values.iter().any(|v| *v < 0.0) {
                return Err(Error::Invalid("amplitude track has negative values".into()));
            }
        }
        Ok(Self { values, fps, kind })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn kind(&self) -> TrackKind {
        self.kind
    }
}

/// Strictly increasing frame indices of detected beats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatTrack {
    frames: Vec<usize>,
    fps: f64,
}

impl BeatTrack {
    pub fn new(frames: Vec<usize>, fps: f64) -> Result<Self> {
        if frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("beat frames must be strictly increasing".into()));
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
