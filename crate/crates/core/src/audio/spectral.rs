use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use super::envelope::frame_bounds;
use super::{FeatureTrack, TrackKind, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandConfig {
    pub n_bands: usize,
    pub f_min: f64,
    /// Upper band edge; `None` means Nyquist.
    pub f_max: Option<f64>,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            n_bands: 16,
            f_min: 0.0,
            f_max: None,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Log energies of mel-spaced triangular bands over each frame window.
///
/// A model-free stand-in for learned speech embeddings: one Hann-windowed
/// FFT per `sample_rate / fps` window, `n_bands` features per frame.
pub fn band_energies(wav: &Waveform, fps: f64, n_frames: usize, config: &BandConfig) -> Result<FeatureTrack> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::Invalid(format!("fps must be positive, got {fps}")));
    }
    if n_frames == 0 || config.n_bands == 0 {
        return Err(Error::Empty("band energy frames/bands"));
    }
    let sr = wav.sample_rate() as f64;
    let window = (sr / fps).floor().max(2.0) as usize;
    let fft_len = window.next_power_of_two();
    let fft = FftPlanner::new().plan_fft_forward(fft_len);
    let nyquist = sr / 2.0;
    let f_max = config.f_max.unwrap_or(nyquist).min(nyquist);
    let (m_lo, m_hi) = (hz_to_mel(config.f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..config.n_bands + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (config.n_bands + 1) as f64))
        .collect();
    let n_bins = fft_len / 2 + 1;
    let bin_hz = sr / fft_len as f64;
    let hann: Vec<f64> = (0..window)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (window - 1) as f64).cos())
        .collect();

    let samples = wav.samples();
    let mut out = Array2::zeros((n_frames, config.n_bands));
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    for (frame, (start, _)) in frame_bounds(wav.sample_rate(), fps, n_frames).enumerate() {
        for (i, b) in buf.iter_mut().enumerate() {
            let s = if i < window {
                samples.get(start + i).copied().unwrap_or(0.0) * hann[i]
            } else {
                0.0
            };
            *b = Complex::new(s, 0.0);
        }
        fft.process(&mut buf);
        for band in 0..config.n_bands {
            let (lo, mid, hi) = (edges[band], edges[band + 1], edges[band + 2]);
            let mut energy = 0.0;
            for (bin, c) in buf.iter().take(n_bins).enumerate() {
                let f = bin as f64 * bin_hz;
                let w = if f > lo && f <= mid {
                    (f - lo) / (mid - lo)
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                energy += w * c.norm_sqr();
            }
            out[[frame, band]] = (energy + 1e-10).ln();
        }
    }
    FeatureTrack::new(out, fps, TrackKind::Linguistic)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tone_lights_up_its_band() {
        let sr = 16_000;
        let samples: Vec<f64> = (0..sr)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / sr as f64).sin())
            .collect();
        let wav = Waveform::new(samples, sr as u32).unwrap();
        let feats = band_energies(&wav, 25.0, 25, &BandConfig::default()).unwrap();
        assert_eq!(feats.dim(), 16);
        let row = feats.values().row(12);
        let loudest = (0..16).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        // mel band centres on 0..8 kHz: 1 kHz lands in band 5 or 6
        assert!((5..=6).contains(&loudest), "loudest band {loudest}");
    }

    #[test]
    fn silence_is_floor() {
        let wav = Waveform::new(vec![0.0; 8000], 16_000).unwrap();
        let feats = band_energies(&wav, 25.0, 4, &BandConfig::default()).unwrap();
        assert!(feats.values().iter().all(|&v| (v - 1e-10f64.ln()).abs() < 1e-9));
    }
}
