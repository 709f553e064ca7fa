use serde::{Deserialize, Serialize};

use super::config::{ClipMeta, CurationConfig};
use crate::audio::Waveform;
use crate::error::{Error, Result};

const SNR_WINDOW_S: f64 = 0.025;
const SNR_HOP_S: f64 = 0.010;
const SNR_MIN_AUDIO_S: f64 = 0.5;

/// Frame-power SNR estimate in dB.
///
/// Powers of 25 ms frames at a 10 ms hop are sorted; the lowest tenth (at
/// least one frame) is the noise floor and the remaining frames the signal.
/// All-silent input gives `-inf`; a signal over an exactly silent floor `+inf`.
pub fn snr_estimate(wav: &Waveform) -> Result<f64> {
    if wav.duration_s() < SNR_MIN_AUDIO_S {
        return Err(Error::Invalid(format!(
            "SNR estimation needs at least {SNR_MIN_AUDIO_S} s of audio, got {:.3} s",
            wav.duration_s()
        )));
    }
    let sr = wav.sample_rate() as f64;
    let win = ((SNR_WINDOW_S * sr).round() as usize).max(1);
    let hop = ((SNR_HOP_S * sr).round() as usize).max(1);
    let x = wav.samples();
    let mut powers: Vec<f64> = (0..=(x.len() - win) / hop)
        .map(|k| {
            let frame = &x[k * hop..k * hop + win];
            frame.iter().map(|s| s * s).sum::<f64>() / win as f64
        })
        .collect();
    powers.sort_by(f64::total_cmp);
    let n_noise = (powers.len() / 10).max(1);
    if powers.len() <= n_noise {
        return Err(Error::Invalid("too few frames for SNR estimation".into()));
    }
    let noise = powers[..n_noise].iter().sum::<f64>() / n_noise as f64;
    let signal = powers[n_noise..].iter().sum::<f64>() / (powers.len() - n_noise) as f64;
    if signal == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "reason", rename_all = "lowercase")]
pub enum GateDecision {
    Accept,
    Reject(String),
}

impl GateDecision {
    pub fn is_accept(&self) -> bool {
        matches!(self, GateDecision::Accept)
    }
}

/// Checks duration, SNR, language confidence and sync confidence in that
/// order and reports the first failure. A missing score fails as `score missing: <name>`.
pub fn gate(meta: &ClipMeta, config: &CurationConfig) -> GateDecision {
    if meta.duration_s.is_nan() || meta.duration_s < config.min_duration_s {
        return GateDecision::Reject("duration".into());
    }
    let checks = [
        ("snr", meta.sidecar.snr_db, config.snr_min_db),
        ("language", meta.sidecar.language_conf, config.language_conf_min),
        ("sync", meta.sidecar.sync_conf, config.sync_conf_min),
    ];
    for (name, value, min) in checks {
        match value {
            None => return GateDecision::Reject(format!("score missing: {name}")),
            // NaN and -inf fail every threshold
            Some(v) if v.is_nan() || v < min => return GateDecision::Reject(name.into()),
            Some(_) => {}
        }
    }
    GateDecision::Accept
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropGeometry {
    pub scale: f64,
    pub scaled_w: u32,
    pub scaled_h: u32,
    pub crop_x: u32,
    pub crop_y: u32,
    pub crop_w: u32,
    pub crop_h: u32,
}

/// Resize so the shorter side equals `target`, then take a centred square crop.
pub fn crop_geometry(src_w: u32, src_h: u32, target: u32) -> Result<CropGeometry> {
    if src_w == 0 || src_h == 0 || target == 0 {
        return Err(Error::Invalid(format!(
            "crop needs positive sizes, got {src_w}x{src_h} -> {target}"
        )));
    }
    let scale = target as f64 / src_w.min(src_h) as f64;
    // the shorter side maps to exactly `target`
    let scaled = |side: u32| {
        if side == src_w.min(src_h) {
            target
        } else {
            (side as f64 * scale).round().max(target as f64) as u32
        }
    };
    let (scaled_w, scaled_h) = (scaled(src_w), scaled(src_h));
    Ok(CropGeometry {
        scale,
        scaled_w,
        scaled_h,
        crop_x: (scaled_w - target) / 2,
        crop_y: (scaled_h - target) / 2,
        crop_w: target,
        crop_h: target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::Sidecar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn meta(secs: f64, snr: Option<f64>, lang: Option<f64>, sync: Option<f64>) -> ClipMeta {
        ClipMeta {
            id: "c".into(),
            identity_key: "p".into(),
            emotion_label: None,
            duration_s: secs,
            width: 640,
            height: 480,
            fps: 25.0,
            sidecar: Sidecar {
                snr_db: snr,
                language_conf: lang,
                sync_conf: sync,
            },
        }
    }

    #[test]
    fn crop_examples() {
        let c = crop_geometry(512, 512, 512).unwrap();
        assert_eq!((c.scale, c.crop_x, c.crop_y, c.crop_w, c.crop_h), (1.0, 0, 0, 512, 512));
        let c = crop_geometry(720, 576, 512).unwrap();
        assert!((c.scale - 512.0 / 576.0).abs() < 1e-15);
        assert_eq!((c.scaled_w, c.scaled_h, c.crop_x, c.crop_y), (640, 512, 64, 0));
        let c = crop_geometry(1920, 1080, 512).unwrap();
        assert_eq!((c.scaled_w, c.scaled_h, c.crop_x, c.crop_y), (910, 512, 199, 0));
        let c = crop_geometry(480, 853, 512).unwrap();
        assert_eq!((c.scaled_w, c.crop_x), (512, 0));
        assert!(c.crop_y + c.crop_h <= c.scaled_h);
        assert!(crop_geometry(0, 10, 512).is_err());
    }

    #[test]
    fn gate_examples() {
        let cfg = CurationConfig::default();
        assert_eq!(
            gate(&meta(12.0, Some(30.0), Some(0.99), Some(6.0)), &cfg),
            GateDecision::Accept
        );
        assert_eq!(
            gate(&meta(12.0, Some(30.0), Some(0.99), Some(1.0)), &cfg),
            GateDecision::Reject("sync".into())
        );
        assert_eq!(
            gate(&meta(12.0, Some(30.0), None, Some(6.0)), &cfg),
            GateDecision::Reject("score missing: language".into())
        );
        assert_eq!(
            gate(&meta(5.0, None, None, None), &cfg),
            GateDecision::Reject("duration".into())
        );
        assert_eq!(
            gate(&meta(12.0, Some(f64::NEG_INFINITY), Some(0.99), Some(6.0)), &cfg),
            GateDecision::Reject("snr".into())
        );
    }

    fn noisy_burst(noise_std: f64, tone_amp: f64, gain: f64) -> Waveform {
        let sr = 16_000;
        let n = sr as usize; // 1 s: 0.15 s noise floor, then tone over the same floor
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, noise_std).unwrap();
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / sr as f64;
                let tone = if t >= 0.15 {
                    tone_amp * (std::f64::consts::TAU * 220.0 * t).sin()
                } else {
                    0.0
                };
                gain * (tone + normal.sample(&mut rng))
            })
            .collect();
        Waveform::new(samples, sr).unwrap()
    }

    #[test]
    fn snr_of_constructed_burst() {
        // tone power a^2/2 = 99 sigma^2, so tone-plus-floor frames sit at 100x the floor
        let sigma = 0.01;
        let amp = (2.0 * 99.0f64).sqrt() * sigma;
        let snr = snr_estimate(&noisy_burst(sigma, amp, 1.0)).unwrap();
        assert!((snr - 20.0).abs() < 1.5, "{snr}");
    }

    #[test]
    fn snr_edge_cases() {
        let silent = Waveform::new(vec![0.0; 16_000], 16_000).unwrap();
        assert_eq!(snr_estimate(&silent).unwrap(), f64::NEG_INFINITY);
        let short = Waveform::new(vec![0.1; 4_000], 16_000).unwrap();
        assert!(snr_estimate(&short).is_err());
        let noise = noisy_burst(0.05, 0.0, 1.0);
        let snr = snr_estimate(&noise).unwrap();
        assert!(snr < 3.0, "{snr}");
    }

    #[test]
    fn snr_is_gain_invariant() {
        let base = snr_estimate(&noisy_burst(0.01, 0.1, 1.0)).unwrap();
        for g in [0.01, 0.5, 3.0] {
            let s = snr_estimate(&noisy_burst(0.01, 0.1, g)).unwrap();
            assert!((s - base).abs() < 0.01, "{g}: {s} vs {base}");
        }
    }
}
