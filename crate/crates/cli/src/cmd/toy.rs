use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::json;
use talkhead_core::flame::StateLayout;
use talkhead_core::io::{write_sequence, write_track, write_wav};
use talkhead_core::model::{ManifestEntry, TrainingManifest};
use talkhead_core::synthetic::{toy_corpus as build_corpus, ToyCorpusSpec};

use crate::{provenance, GlobalArgs};

#[derive(Debug, Clone, Args)]
pub struct ToyCorpusArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    /// Animated frames per clip.
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, default_value_t = 25.0)]
    pub fps: f64,
    /// `toy`, `flame`, or `beta,psi,delta`.
    #[arg(long, default_value = "toy")]
    pub layout: String,
}

/// Writes `clip_<i>.wav`, `clip_<i>_params.fpm` (absolute, reference first),
/// the three conditioning tracks per clip, and `manifest.json`.
pub fn toy_corpus(g: &GlobalArgs, a: ToyCorpusArgs) -> Result<()> {
    let layout: StateLayout = a.layout.parse()?;
    let spec = ToyCorpusSpec {
        n_samples: a.samples,
        n_frames: a.frames,
        fps: a.fps,
        layout,
        seed: g.seed.unwrap_or(ToyCorpusSpec::default().seed),
        ..ToyCorpusSpec::default()
    };
    let clips = build_corpus(&spec)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let config = json!({
        "samples": spec.n_samples,
        "frames": spec.n_frames,
        "fps": spec.fps,
        "layout": spec.layout,
        "linguistic_dim": spec.linguistic_dim,
        "emotion_dim": spec.emotion_dim,
    });
    let meta = provenance("toy-corpus", Some(spec.seed), config)?;
    let mut entries = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        let name = |suffix: &str| format!("clip_{i}{suffix}");
        let params = name("_params.fpm");
        let mut clip_meta = meta.clone();
        clip_meta["emotion_class"] = json!(clip.emotion_class);
        write_sequence(a.out_dir.join(&params), &clip.absolute()?, Some(clip_meta))?;
        write_wav(a.out_dir.join(name(".wav")), &clip.waveform)?;
        write_track(
            a.out_dir.join(name("_linguistic.fpm")),
            &clip.cond.linguistic,
            Some(meta.clone()),
        )?;
        write_track(
            a.out_dir.join(name("_amplitude.fpm")),
            &clip.cond.amplitude,
            Some(meta.clone()),
        )?;
        write_track(
            a.out_dir.join(name("_emotion.fpm")),
            &clip.cond.emotion,
            Some(meta.clone()),
        )?;
        entries.push(ManifestEntry {
            reference: params.clone().into(),
            target: params.into(),
            linguistic: name("_linguistic.fpm").into(),
            amplitude: name("_amplitude.fpm").into(),
            emotion: name("_emotion.fpm").into(),
        });
    }
    let manifest = TrainingManifest { samples: entries };
    let path = a.out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {} clips to {}", clips.len(), a.out_dir.display());
    Ok(())
}
