use ndarray::Array2;

use super::{FeatureTrack, TrackKind, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnvelopeMode {
    /// Mean absolute value per window.
    #[default]
    MeanAbs,
    Rms,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnvelopeConfig {
    pub mode: EnvelopeMode,
    /// Divide by the clip maximum so values land in `[0, 1]`.
    pub normalize: bool,
}

/// Envelope used for the amplitude conditioning stream: mean absolute value
/// scaled to the clip maximum.
pub const CONDITIONING_ENVELOPE: EnvelopeConfig = EnvelopeConfig {
    mode: EnvelopeMode::MeanAbs,
    normalize: true,
};

/// Window boundaries `[floor(i·sr/fps), floor((i+1)·sr/fps))` for `n_frames` frames.
pub(crate) fn frame_bounds(sample_rate: u32, fps: f64, n_frames: usize) -> impl Iterator<Item = (usize, usize)> {
    let hop = sample_rate as f64 / fps;
    (0..n_frames).map(move |i| {
        (
            (i as f64 * hop).floor() as usize,
            ((i + 1) as f64 * hop).floor() as usize,
        )
    })
}

/// Per-frame amplitude over non-overlapping windows of `sample_rate / fps`
/// samples. Samples past the end of the clip count as silence.
pub fn amplitude_envelope(wav: &Waveform, fps: f64, n_frames: usize, config: &EnvelopeConfig) -> Result<FeatureTrack> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::Invalid(format!("fps must be positive, got {fps}")));
    }
    if n_frames == 0 {
        return Err(Error::Empty("amplitude envelope frame count"));
    }
    let samples = wav.samples();
    let mut values: Vec<f64> = frame_bounds(wav.sample_rate(), fps, n_frames)
        .map(|(start, end)| {
            let len = end.saturating_sub(start).max(1) as f64;
            let present = samples
                .get(start.min(samples.len())..end.min(samples.len()))
                .unwrap_or(&[]);
            match config.mode {
                EnvelopeMode::MeanAbs => present.iter().map(|s| s.abs()).sum::<f64>() / len,
                EnvelopeMode::Rms => (present.iter().map(|s| s * s).sum::<f64>() / len).sqrt(),
            }
        })
        .collect();
    if config.normalize {
        let peak = values.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            values.iter_mut().for_each(|v| *v /= peak);
        }
    }
    let values = Array2::from_shape_vec((n_frames, 1), values).expect("one column");
    FeatureTrack::new(values, fps, TrackKind::Amplitude)
}
