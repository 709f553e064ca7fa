//! Deterministic toy corpus of (audio features → parameter sequence) pairs.
//!
//! Each clip is a synthetic voiced waveform with a syllable-rate envelope. Its
//! motion is a fixed per-frame function of the clip's own conditioning: jaw
//! opening and head pitch follow the amplitude envelope, expression follows an
//! emotion-class offset plus a linear read-out of the spectral features, and
//! detail coefficients follow the spectrum. Identity stays at the reference.

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{
    amplitude_envelope, band_energies, BandConfig, FeatureTrack, TrackKind, Waveform, CANONICAL_SAMPLE_RATE,
    CONDITIONING_ENVELOPE,
};
use crate::error::Result;
use crate::flame::{to_absolute, ParamSequence, StateLayout};
use crate::model::{ConditioningBundle, TrainingSample};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpusSpec {
    pub n_samples: usize,
    /// Animated frames per clip (the reference frame is extra).
    pub n_frames: usize,
    pub fps: f64,
    pub layout: StateLayout,
    pub linguistic_dim: usize,
    pub emotion_dim: usize,
    pub seed: u64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        Self {
            n_samples: 8,
            n_frames: 32,
            fps: 25.0,
            layout: StateLayout::FLAME,
            linguistic_dim: 16,
            emotion_dim: 8,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyClip {
    pub waveform: Waveform,
    pub emotion_class: usize,
    /// Differential targets anchored at the reference frame.
    pub target: ParamSequence,
    pub cond: ConditioningBundle,
}

impl ToyClip {
    pub fn reference(&self) -> &Array1<f64> {
        self.target.reference().expect("differential target")
    }

    /// Absolute sequence with the reference as row 0.
    pub fn absolute(&self) -> Result<ParamSequence> {
        to_absolute(&self.target)
    }

    pub fn sample(&self) -> TrainingSample {
        TrainingSample {
            x_ref: self.reference().clone(),
            x_delta: self.target.frames().clone(),
            cond: self.cond.clone(),
        }
    }
}

const N_EMOTION_CLASSES: usize = 7;

fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// Per-column z-score; constant columns become zero.
fn standardize(m: &mut Array2<f64>) {
    for mut col in m.columns_mut() {
        let mean = col.mean().unwrap_or(0.0);
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        col.mapv_inplace(|v| if std > 1e-12 { (v - mean) / std } else { 0.0 });
    }
}

fn waveform(rng: &mut ChaCha8Rng, seconds: f64) -> Result<Waveform> {
    let sr = CANONICAL_SAMPLE_RATE;
    let f0: f64 = rng.random_range(110.0..220.0);
    let syllable_rate = rng.random_range(3.0..5.5);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let brightness: f64 = rng.random_range(0.3..0.9);
    let level = rng.random_range(0.3..0.8);
    let n = (seconds * sr as f64).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr as f64;
            let env = (std::f64::consts::TAU * syllable_rate * t + phase)
                .sin()
                .max(0.0)
                .powi(2);
            let carrier: f64 = (1..=6)
                .map(|h| brightness.powi(h - 1) * (std::f64::consts::TAU * f0 * h as f64 * t).sin())
                .sum();
            level * env * carrier / 2.0
        })
        .collect();
    Waveform::new(samples, sr)
}

/// Builds `spec.n_samples` clips from `spec.seed`.
pub fn toy_corpus(spec: &ToyCorpusSpec) -> Result<Vec<ToyClip>> {
    spec.layout.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lay = spec.layout;
    let d = spec.linguistic_dim;
    // corpus-wide read-out maps shared by every clip
    let emotion_codes = randn(&mut rng, N_EMOTION_CLASSES, spec.emotion_dim, 1.0);
    let emotion_offsets = randn(&mut rng, N_EMOTION_CLASSES, lay.psi, 0.5);
    let psi_map = randn(&mut rng, d, lay.psi, 0.3 / (d as f64).sqrt());
    let delta_map = randn(&mut rng, d, lay.delta, 0.2 / (d as f64).sqrt());
    let head_map = randn(&mut rng, d, 2, 0.05 / (d as f64).sqrt());

    let mut clips = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let wav = waveform(&mut rng, spec.n_frames as f64 / spec.fps)?;
        let amplitude = amplitude_envelope(&wav, spec.fps, spec.n_frames, &CONDITIONING_ENVELOPE)?;
        let bands = BandConfig {
            n_bands: d,
            ..BandConfig::default()
        };
        let mut ling = band_energies(&wav, spec.fps, spec.n_frames, &bands)?.into_values();
        standardize(&mut ling);
        let class = i % N_EMOTION_CLASSES;
        let emotion = emotion_codes
            .row(class)
            .insert_axis(Axis(0))
            .broadcast((spec.n_frames, spec.emotion_dim))
            .expect("row broadcast")
            .to_owned();

        let amp = amplitude.values().column(0).to_owned();
        let mut delta = Array2::zeros((spec.n_frames, lay.total()));
        delta.slice_mut(s![.., lay.jaw_range().start]).assign(&(&amp * 0.3));
        let head = ling.dot(&head_map);
        let h0 = lay.head_range().start;
        delta.slice_mut(s![.., h0]).assign(&(&amp * 0.1 + head.column(0)));
        delta.slice_mut(s![.., h0 + 1]).assign(&head.column(1));
        let psi = ling.dot(&psi_map) + emotion_offsets.row(class);
        delta.slice_mut(s![.., lay.psi_range()]).assign(&psi);
        delta.slice_mut(s![.., lay.delta_range()]).assign(&ling.dot(&delta_map));

        let mut reference = Array1::zeros(lay.total());
        reference
            .slice_mut(s![lay.beta_range()])
            .assign(&randn(&mut rng, 1, lay.beta, 0.5).row(0));
        reference
            .slice_mut(s![lay.psi_range()])
            .assign(&randn(&mut rng, 1, lay.psi, 0.2).row(0));

        let target = ParamSequence::differential(delta, spec.fps, lay, reference)?;
        let cond = ConditioningBundle::new(
            FeatureTrack::new(ling, spec.fps, TrackKind::Linguistic)?,
            amplitude,
            FeatureTrack::new(emotion, spec.fps, TrackKind::Emotion)?,
        )?;
        clips.push(ToyClip {
            waveform: wav,
            emotion_class: class,
            target,
            cond,
        });
    }
    Ok(clips)
}
