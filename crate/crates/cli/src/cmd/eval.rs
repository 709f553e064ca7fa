use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use ndarray::{s, Array2};
use rayon::prelude::*;
use talkhead_core::audio::{audio_beats, BeatDetectorConfig, BeatTrack};
use talkhead_core::flame::{decode, HeadRig, ParamSequence};
use talkhead_core::io::{read_rig, read_wav};
use talkhead_core::metrics::{evaluate, EvalInput, LipAggregate, MetricsConfig, MetricsReport, RegionMask};

use super::read_absolute;
use crate::{ensure_parent, GlobalArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Aggregate {
    Mean,
    Max,
}

impl From<Aggregate> for LipAggregate {
    fn from(a: Aggregate) -> Self {
        match a {
            Aggregate::Mean => LipAggregate::Mean,
            Aggregate::Max => LipAggregate::Max,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Predicted parameter file.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth parameter file.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub rig: PathBuf,
    /// Lip and upper-face vertex masks; the synthetic-rig rule is used when absent.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Speech waveform for audio beats.
    #[arg(long)]
    pub audio: PathBuf,
    /// JSON report; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Append one CSV row (a header is written first if the file is new).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Aggregate::Mean)]
    pub lip_aggregate: Aggregate,
    /// Beat-alignment kernel width in frames.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Fail on mismatched lengths instead of truncating.
    #[arg(long)]
    pub strict: bool,
    /// Also score row 0 of absolute sequences (the reference frame).
    #[arg(long)]
    pub include_reference: bool,
}

fn meshes(rig: &HeadRig, seq: &ParamSequence, rows: std::ops::Range<usize>) -> Result<Vec<Array2<f64>>> {
    rows.into_par_iter()
        .map(|i| Ok(decode(rig, &seq.params(i)?)?.vertices))
        .collect()
}

pub fn eval(_g: &GlobalArgs, a: EvalArgs) -> Result<()> {
    let pred = read_absolute(&a.pred)?;
    let gt = read_absolute(&a.gt)?;
    if pred.dims() != gt.dims() {
        bail!(
            "prediction layout {:?} differs from ground truth {:?}",
            pred.dims(),
            gt.dims()
        );
    }
    if (pred.fps() - gt.fps()).abs() > 1e-9 {
        bail!("prediction runs at {} fps, ground truth at {}", pred.fps(), gt.fps());
    }
    let rig = read_rig(&a.rig).with_context(|| format!("reading {}", a.rig.display()))?;
    let mask = match &a.masks {
        Some(p) => RegionMask::read(p).with_context(|| format!("reading {}", p.display()))?,
        None => RegionMask::for_synthetic_rig(&rig),
    };

    let start = usize::from(!a.include_reference);
    let (np, ng) = (pred.n_rows(), gt.n_rows());
    if np != ng {
        if a.strict {
            bail!("prediction has {np} rows, ground truth {ng}");
        }
        log::warn!(
            "prediction has {np} rows, ground truth {ng}; scoring the first {}",
            np.min(ng)
        );
    }
    let end = np.min(ng);
    if end <= start {
        bail!("no frames to score");
    }
    let pred_meshes = meshes(&rig, &pred, start..end)?;
    let gt_meshes = meshes(&rig, &gt, start..end)?;
    let head = pred.head_pose().slice(s![start..end, ..]).to_owned();

    let fps = pred.fps();
    let wav = read_wav(&a.audio).with_context(|| format!("reading {}", a.audio.display()))?;
    let beats = audio_beats(&wav, fps, &BeatDetectorConfig::default())?;
    let n = end - start;
    let beats = BeatTrack::new(beats.frames().iter().copied().filter(|&f| f < n).collect(), fps)?;

    let mut config = MetricsConfig {
        lip_aggregate: a.lip_aggregate.into(),
        ..MetricsConfig::default()
    };
    if let Some(sigma) = a.sigma {
        config.sigma_frames = sigma;
    }
    let report = evaluate(
        &EvalInput {
            pred: &pred_meshes,
            gt: &gt_meshes,
            pred_head_pose: &head,
            mask: &mask,
            audio_beats: &beats,
            fps,
        },
        &config,
    )?;

    match &a.out {
        Some(path) => {
            ensure_parent(path)?;
            report.write_json(path)?;
        }
        None => println!("{}", report.to_json()?),
    }
    if let Some(path) = &a.csv {
        append_csv(path, &report)?;
    }
    Ok(())
}

fn append_csv(path: &std::path::Path, report: &MetricsReport) -> Result<()> {
    ensure_parent(path)?;
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        writeln!(file, "{}", MetricsReport::CSV_HEADER)?;
    }
    writeln!(file, "{}", report.csv_row())?;
    Ok(())
}
