use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ndarray::Array2;
use rayon::prelude::*;
use serde_json::json;
use talkhead_core::audio::{amplitude_envelope, CONDITIONING_ENVELOPE};
use talkhead_core::control::{
    apply_emotion_schedule, gen_trajectory, superimpose, EmotionLabel, TemplateSet, TrajectorySpec, TransitionSchedule,
};
use talkhead_core::flame::{decode, to_absolute, ParamSequence};
use talkhead_core::io::{read_rig, read_table, read_track, read_wav, write_obj, write_sequence};
use talkhead_core::model::{generate as sample, read_checkpoint, ConditioningBundle};

use super::read_absolute;
use crate::{ensure_parent, provenance, GlobalArgs};

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub weights: PathBuf,
    /// Parameter file whose first row is the reference frame.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Speech waveform; drives the amplitude conditioning.
    #[arg(long)]
    pub audio: PathBuf,
    /// Frame-aligned linguistic feature track; sets the frame count and rate.
    #[arg(long)]
    pub linguistic: PathBuf,
    /// Frame-aligned emotion feature track.
    #[arg(long)]
    pub emotion_features: PathBuf,
    /// Output parameter file (absolute, reference first).
    #[arg(long)]
    pub out: PathBuf,
    /// Sampling steps; defaults to the checkpoint's inference setting.
    #[arg(long)]
    pub t_inf: Option<usize>,
    /// Emotion applied to every frame.
    #[arg(long, requires = "templates", conflicts_with = "emotion_schedule")]
    pub emotion: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// JSON `{"segments": [{"label", "start", "end", "lambda", "alpha"}], "blend_frames"}`.
    #[arg(long, requires = "templates")]
    pub emotion_schedule: Option<PathBuf>,
    /// Emotion template file.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Preset spec such as `sway`, or an offset table written by `trajectory-gen`.
    #[arg(long)]
    pub trajectory: Option<String>,
    /// Directory for one OBJ mesh per generated frame.
    #[arg(long, requires = "rig")]
    pub obj_dir: Option<PathBuf>,
    #[arg(long)]
    pub rig: Option<PathBuf>,
}

fn trajectory_offsets(arg: &str, n_rows: usize, fps: f64) -> Result<(Array2<f64>, serde_json::Value)> {
    let path = Path::new(arg);
    if path.is_file() {
        let (table, _) = read_table(path).with_context(|| format!("reading {arg}"))?;
        if table.dim() != (n_rows, 3) {
            bail!("trajectory table {arg} is {:?}, expected ({n_rows}, 3)", table.dim());
        }
        return Ok((
            table,
            json!({ "table": path.file_name().map(|n| n.to_string_lossy().into_owned()) }),
        ));
    }
    let spec: TrajectorySpec = arg.parse()?;
    Ok((gen_trajectory(&spec, n_rows, fps)?, serde_json::to_value(spec)?))
}

pub fn generate(g: &GlobalArgs, a: GenerateArgs) -> Result<()> {
    let (weights, header) = read_checkpoint(&a.weights).with_context(|| format!("reading {}", a.weights.display()))?;
    let reference = read_absolute(&a.reference)?;
    let x_ref = reference.frames().row(0).to_owned();
    if reference.dims() != weights.config().state {
        bail!(
            "reference layout {:?} does not match the checkpoint layout {:?}",
            reference.dims(),
            weights.config().state
        );
    }
    let linguistic = read_track(&a.linguistic).with_context(|| format!("reading {}", a.linguistic.display()))?;
    let emotion =
        read_track(&a.emotion_features).with_context(|| format!("reading {}", a.emotion_features.display()))?;
    let wav = read_wav(&a.audio).with_context(|| format!("reading {}", a.audio.display()))?;
    let (fps, n) = (linguistic.fps(), linguistic.n_frames());
    let amplitude = amplitude_envelope(&wav, fps, n, &CONDITIONING_ENVELOPE)?;
    let cond = ConditioningBundle::new(linguistic, amplitude, emotion)?;

    let seed = g.seed.unwrap_or(0);
    let t_inf = a.t_inf.unwrap_or(header.config.infer_steps);
    let diff = sample(&weights, &x_ref, &cond, t_inf, seed)?;
    let mut seq = to_absolute(&diff)?;
    log::info!("sampled {n} frames in {t_inf} steps");

    let mut config = json!({ "t_inf": t_inf, "frames": n, "fps": fps });
    let schedule = match (&a.emotion, &a.emotion_schedule) {
        (Some(label), _) => {
            let label: EmotionLabel = label.parse()?;
            Some(TransitionSchedule::constant(label, n, a.lambda, a.alpha))
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        (None, None) => None,
    };
    if let Some(schedule) = schedule {
        let path = a
            .templates
            .as_ref()
            .context("--templates is required with an emotion")?;
        let templates = TemplateSet::read(path).with_context(|| format!("reading {}", path.display()))?;
        seq = apply_emotion_schedule(&seq, &schedule, &templates)?;
        config["emotion"] = serde_json::to_value(&schedule)?;
    }
    if let Some(arg) = &a.trajectory {
        let (offsets, desc) = trajectory_offsets(arg, seq.n_rows(), fps)?;
        seq = superimpose(&seq, &offsets)?;
        config["trajectory"] = desc;
    }

    ensure_parent(&a.out)?;
    write_sequence(&a.out, &seq, Some(provenance("generate", Some(seed), config)?))
        .with_context(|| format!("writing {}", a.out.display()))?;

    if let (Some(dir), Some(rig)) = (&a.obj_dir, &a.rig) {
        export_obj(&seq, rig, dir)?;
    }
    Ok(())
}

/// Writes `frame_00000.obj` onward for the animated rows (the reference row is skipped).
fn export_obj(seq: &ParamSequence, rig: &Path, dir: &Path) -> Result<()> {
    let rig = read_rig(rig).with_context(|| format!("reading {}", rig.display()))?;
    let meshes = (1..seq.n_rows())
        .into_par_iter()
        .map(|i| Ok(decode(&rig, &seq.params(i)?)?))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (i, mesh) in meshes.iter().enumerate() {
        let path = dir.join(format!("frame_{i:05}.obj"));
        write_obj(&path, mesh).with_context(|| format!("writing {}", path.display()))?;
    }
    log::info!("wrote {} meshes to {}", meshes.len(), dir.display());
    Ok(())
}
