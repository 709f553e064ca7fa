use super::envelope::{amplitude_envelope, EnvelopeConfig};
use super::{BeatTrack, Waveform};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatDetectorConfig {
    /// Peaks must exceed `mean + threshold_std · std` of the onset curve.
    pub threshold_std: f64,
    /// Minimum distance between accepted beats, in frames.
    pub min_separation: usize,
}

impl Default for BeatDetectorConfig {
    fn default() -> Self {
        Self {
            threshold_std: 1.0,
            min_separation: 4,
        }
    }
}

/// Positive half-wave rectified first difference; the clip is preceded by silence.
pub fn onset_strength(envelope: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    envelope
        .iter()
        .map(|&e| {
            let d = (e - prev).max(0.0);
            prev = e;
            d
        })
        .collect()
}

/// Energy-rise beats of a waveform at the given frame rate.
pub fn audio_beats(wav: &Waveform, fps: f64, config: &BeatDetectorConfig) -> Result<BeatTrack> {
    if wav.is_empty() {
        return BeatTrack::new(Vec::new(), fps);
    }
    let n_frames = (wav.duration_s() * fps).ceil().max(1.0) as usize;
    let env = amplitude_envelope(wav, fps, n_frames, &EnvelopeConfig::default())?;
    let onset = onset_strength(env.values().column(0).as_slice().expect("contiguous column"));
    let threshold = mean_std(&onset)
        .map(|(m, s)| m + config.threshold_std * s)
        .unwrap_or(0.0);
    let candidates: Vec<usize> = (0..onset.len())
        .filter(|&i| {
            let v = onset[i];
            v > threshold && (i == 0 || v > onset[i - 1]) && (i + 1 == onset.len() || v >= onset[i + 1])
        })
        .collect();
    // strongest first, earlier index on ties
    let frames = thin_by_separation(candidates, config.min_separation, |a, b| {
        onset[b].total_cmp(&onset[a]).then(a.cmp(&b))
    });
    BeatTrack::new(frames, fps)
}

pub(crate) fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Greedy non-maximum suppression: visit candidates in `priority` order and
/// keep those at least `min_separation` frames from every kept one.
pub(crate) fn thin_by_separation(
    mut candidates: Vec<usize>,
    min_separation: usize,
    priority: impl Fn(usize, usize) -> std::cmp::Ordering,
) -> Vec<usize> {
    candidates.sort_by(|&a, &b| priority(a, b));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| k.abs_diff(c) >= min_separation) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}
