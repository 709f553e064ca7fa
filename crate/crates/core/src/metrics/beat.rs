use ndarray::Array2;

use crate::audio::beats::thin_by_separation;
use crate::audio::BeatTrack;
use crate::error::{Error, Result};

/// Default kernel width for beat alignment, frames at 25 FPS.
pub const DEFAULT_BEAT_SIGMA: f64 = 3.0;
/// Default minimum spacing between motion beats, frames.
pub const DEFAULT_MOTION_SEPARATION: usize = 4;

/// Kinematic pauses of the head: interior local minima of angular speed that
/// do not exceed its mean, thinned to `min_separation` (slowest first, earlier
/// frame on ties). Speed `i` is `|theta[i+1] - theta[i]| * fps` and is
/// attributed to frame `i`. Fewer than three frames yield no beats.
pub fn motion_beats(head_pose: &Array2<f64>, fps: f64, min_separation: usize) -> Result<BeatTrack> {
    if head_pose.ncols() != 3 {
        return Err(Error::shape("head pose columns", 3, head_pose.ncols()));
    }
    let n = head_pose.nrows();
    if n < 3 {
        return BeatTrack::new(Vec::new(), fps);
    }
    let speed: Vec<f64> = (0..n - 1)
        .map(|i| {
            let d = &head_pose.row(i + 1) - &head_pose.row(i);
            d.dot(&d).sqrt() * fps
        })
        .collect();
    let mean = speed.iter().sum::<f64>() / speed.len() as f64;
    let candidates: Vec<usize> = (1..speed.len().saturating_sub(1))
        .filter(|&i| speed[i] <= mean && speed[i] <= speed[i - 1] && speed[i] <= speed[i + 1])
        .collect();
    let frames = thin_by_separation(candidates, min_separation, |a, b| {
        speed[a].total_cmp(&speed[b]).then(a.cmp(&b))
    });
    BeatTrack::new(frames, fps)
}

fn nearest_gap(b: usize, motion: &[usize]) -> Option<f64> {
    motion.iter().map(|&m| b.abs_diff(m) as f64).min_by(f64::total_cmp)
}

/// Mean Gaussian-kernel agreement between each audio beat and its nearest motion beat.
pub fn beat_align(audio: &BeatTrack, motion: &BeatTrack, sigma_frames: f64) -> Result<f64> {
    if audio.is_empty() {
        return Err(Error::Empty("audio beats"));
    }
    if !(sigma_frames > 0.0 && sigma_frames.is_finite()) {
        return Err(Error::Invalid(format!(
            "beat sigma must be positive, got {sigma_frames}"
        )));
    }
    if motion.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = audio
        .frames()
        .iter()
        .map(|&b| {
            let d = nearest_gap(b, motion.frames()).expect("motion beats are non-empty");
            (-d * d / (2.0 * sigma_frames * sigma_frames)).exp()
        })
        .sum();
    Ok(total / audio.len() as f64)
}

/// Mean frame distance from each audio beat to its nearest motion beat;
/// `None` when either list is empty.
pub fn beat_distance(audio: &BeatTrack, motion: &BeatTrack) -> Option<f64> {
    if audio.is_empty() || motion.is_empty() {
        return None;
    }
    let total: f64 = audio
        .frames()
        .iter()
        .filter_map(|&b| nearest_gap(b, motion.frames()))
        .sum();
    Some(total / audio.len() as f64)
}
