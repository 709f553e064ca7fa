use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use talkhead_core::flame::{synthetic_rig, SyntheticRigSpec};
use talkhead_core::io::write_rig;
use talkhead_core::metrics::RegionMask;

use crate::{ensure_parent, provenance, GlobalArgs};

#[derive(Debug, Clone, Args, Serialize)]
pub struct RigSynthArgs {
    /// Vertex count (at least 5).
    #[arg(long, default_value_t = 12)]
    pub vertices: usize,
    /// Joint count (at least 2: neck root and jaw).
    #[arg(long, default_value_t = 2)]
    pub joints: usize,
    /// Rank of both blendshape bases unless overridden.
    #[arg(long, default_value_t = 4)]
    pub basis_rank: usize,
    #[arg(long)]
    pub shape_rank: Option<usize>,
    #[arg(long)]
    pub expr_rank: Option<usize>,
    /// Output rig file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write lip and upper-face masks for this rig.
    #[arg(long)]
    pub masks_out: Option<PathBuf>,
}

pub fn rig_synth(g: &GlobalArgs, a: RigSynthArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let spec = SyntheticRigSpec {
        n_vertices: a.vertices,
        n_joints: a.joints,
        shape_rank: a.shape_rank.unwrap_or(a.basis_rank),
        expr_rank: a.expr_rank.unwrap_or(a.basis_rank),
        seed,
    };
    let rig = synthetic_rig(spec)?;
    let config = serde_json::json!({
        "vertices": spec.n_vertices,
        "joints": spec.n_joints,
        "shape_rank": spec.shape_rank,
        "expr_rank": spec.expr_rank,
    });
    ensure_parent(&a.out)?;
    write_rig(&a.out, &rig, Some(provenance("rig-synth", Some(seed), config)?))
        .with_context(|| format!("writing {}", a.out.display()))?;
    log::info!("wrote rig with {} vertices to {}", rig.n_vertices(), a.out.display());
    if let Some(path) = &a.masks_out {
        ensure_parent(path)?;
        RegionMask::for_synthetic_rig(&rig).write(path)?;
    }
    Ok(())
}
