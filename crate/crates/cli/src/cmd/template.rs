use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use ndarray::s;
use serde::Serialize;
use talkhead_core::control::{extract_template, gen_trajectory, EmotionLabel, TemplateSet, TrajectorySpec};
use talkhead_core::io::write_table;

use super::read_absolute;
use crate::{display, ensure_parent, provenance, GlobalArgs};

#[derive(Debug, Clone, Args)]
pub struct TemplateExtractArgs {
    /// Emotion the sessions show.
    #[arg(long)]
    pub label: String,
    /// Parameter files of the labelled sessions.
    #[arg(long, num_args = 1.., required = true)]
    pub sessions: Vec<PathBuf>,
    /// Template file; an existing file is updated in place.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn template_extract(_g: &GlobalArgs, a: TemplateExtractArgs) -> Result<()> {
    let label: EmotionLabel = a.label.parse()?;
    let sessions = a
        .sessions
        .iter()
        .map(|p| {
            let seq = read_absolute(p)?;
            Ok(seq.frames().slice(s![.., seq.dims().psi_range()]).to_owned())
        })
        .collect::<Result<Vec<_>>>()?;
    let template = extract_template(&sessions, label)?;
    let mut set = if a.out.exists() {
        TemplateSet::read(&a.out).with_context(|| format!("reading {}", a.out.display()))?
    } else {
        TemplateSet::new()
    };
    set.insert(template)?;
    ensure_parent(&a.out)?;
    set.write(&a.out)?;
    log::info!(
        "{label} template from {} sessions written to {}",
        sessions.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrajectoryGenArgs {
    /// Preset and options, e.g. `sway` or `nod,amplitude=0.1,period=1.5`.
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub frames: usize,
    #[arg(long, default_value_t = 25.0)]
    pub fps: f64,
    /// Output table (frames x 3, radians).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn trajectory_gen(g: &GlobalArgs, a: TrajectoryGenArgs) -> Result<()> {
    let spec: TrajectorySpec = a.spec.parse()?;
    let traj = gen_trajectory(&spec, a.frames, a.fps)?;
    let config = serde_json::json!({ "spec": spec, "frames": a.frames, "fps": a.fps });
    ensure_parent(&a.out)?;
    write_table(
        &a.out,
        &traj,
        a.fps,
        Some(provenance("trajectory-gen", g.seed, config)?),
    )
    .with_context(|| format!("writing {}", display(&a.out)))?;
    Ok(())
}
