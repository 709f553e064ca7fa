use ndarray::Array2;

use super::FeatureTrack;
use crate::error::{Error, Result};

/// Per-column linear interpolation to `target_n` frames over normalized time.
///
/// The first and last frames map onto each other exactly. The output frame
/// rate is scaled so that the clip duration is unchanged.
pub fn resample_track(track: &FeatureTrack, target_n: usize) -> Result<FeatureTrack> {
    if target_n < 1 {
        return Err(Error::Invalid("target frame count must be at least 1".into()));
    }
    let n = track.n_frames();
    if target_n == n {
        return Ok(track.clone());
    }
    if n < 2 {
        return Err(Error::Invalid("resampling needs at least 2 source frames".into()));
    }
    let src = track.values();
    let mut out = Array2::zeros((target_n, track.dim()));
    let span = (target_n - 1).max(1);
    for j in 0..target_n {
        // integer numerator keeps grid-aligned positions exact
        let num = j * (n - 1);
        let lo = num / span;
        let frac = (num % span) as f64 / span as f64;
        let hi = (lo + 1).min(n - 1);
        for c in 0..track.dim() {
            out[[j, c]] = if frac == 0.0 {
                src[[lo, c]]
            } else {
                src[[lo, c]] + frac * (src[[hi, c]] - src[[lo, c]])
            };
        }
    }
    let fps = track.fps() * target_n as f64 / n as f64;
    FeatureTrack::new(out, fps, track.kind())
}
