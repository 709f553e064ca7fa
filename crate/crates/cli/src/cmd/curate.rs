use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use talkhead_core::curation::{
    append_manifest_row, package_sequence, plan, plan_json, snr_estimate, ClipMeta, CurationConfig, PlanAction, Sidecar,
};
use talkhead_core::io::read_wav;

use crate::{ensure_parent, GlobalArgs};

#[derive(Debug, Clone, Args)]
pub struct CurateArgs {
    /// JSON list of clip metadata.
    #[arg(long)]
    pub clips: PathBuf,
    /// Directory of `<id>.json` score files merged over the inline scores.
    #[arg(long)]
    pub sidecars: Option<PathBuf>,
    /// Directory of `<id>.wav`; fills in missing SNR scores.
    #[arg(long)]
    pub audio_dir: Option<PathBuf>,
    /// Curation thresholds as JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub min_duration: Option<f64>,
    #[arg(long)]
    pub snr_min: Option<f64>,
    #[arg(long)]
    pub language_min: Option<f64>,
    #[arg(long)]
    pub sync_min: Option<f64>,
    #[arg(long)]
    pub resolution: Option<u32>,
    /// Plan output (JSON list, one entry per clip).
    #[arg(long)]
    pub plan_out: PathBuf,
    /// Directory of `<id>_params.fpm` absolute parameter files to package.
    #[arg(long, requires_all = ["out_dir", "manifest_out"])]
    pub params_dir: Option<PathBuf>,
    /// Where packaged differential files go.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Newline-delimited manifest of packaged files (rewritten on each run).
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

fn resolve_config(a: &CurateArgs) -> Result<CurationConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => CurationConfig::default(),
    };
    if let Some(v) = a.min_duration {
        cfg.min_duration_s = v;
    }
    if let Some(v) = a.snr_min {
        cfg.snr_min_db = v;
    }
    if let Some(v) = a.language_min {
        cfg.language_conf_min = v;
    }
    if let Some(v) = a.sync_min {
        cfg.sync_conf_min = v;
    }
    if let Some(v) = a.resolution {
        cfg.target_resolution = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn curate(_g: &GlobalArgs, a: CurateArgs) -> Result<()> {
    let cfg = resolve_config(&a)?;
    let text = std::fs::read_to_string(&a.clips).with_context(|| format!("reading {}", a.clips.display()))?;
    let mut clips: Vec<ClipMeta> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.clips.display()))?;

    if let Some(dir) = &a.sidecars {
        for clip in &mut clips {
            let path = dir.join(format!("{}.json", clip.id));
            if path.is_file() {
                let extra = Sidecar::read(&path).with_context(|| format!("reading {}", path.display()))?;
                clip.sidecar = clip.sidecar.merged(extra);
            }
        }
    }
    if let Some(dir) = &a.audio_dir {
        clips
            .par_iter_mut()
            .filter(|c| c.sidecar.snr_db.is_none())
            .try_for_each(|clip| -> Result<()> {
                let path = dir.join(format!("{}.wav", clip.id));
                if path.is_file() {
                    let wav = read_wav(&path).with_context(|| format!("reading {}", path.display()))?;
                    clip.sidecar.snr_db = Some(snr_estimate(&wav)?);
                }
                Ok(())
            })?;
    }

    let entries = plan(&clips, &cfg)?;
    ensure_parent(&a.plan_out)?;
    std::fs::write(&a.plan_out, plan_json(&entries)?).with_context(|| format!("writing {}", a.plan_out.display()))?;
    let accepted: Vec<&str> = entries
        .iter()
        .filter(|e| matches!(e.action, PlanAction::Accept { .. }))
        .map(|e| e.clip_id.as_str())
        .collect();
    log::info!("{} of {} clips accepted", accepted.len(), entries.len());

    if let (Some(params), Some(out_dir), Some(manifest)) = (&a.params_dir, &a.out_dir, &a.manifest_out) {
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        ensure_parent(manifest)?;
        std::fs::write(manifest, b"").with_context(|| format!("writing {}", manifest.display()))?;
        for id in accepted {
            let src = params.join(format!("{id}_params.fpm"));
            let dst = out_dir.join(format!("{id}_delta.fpm"));
            let row = package_sequence(id, &src, &dst, &cfg).with_context(|| format!("packaging {id}"))?;
            append_manifest_row(manifest, &row)?;
        }
    }
    Ok(())
}
