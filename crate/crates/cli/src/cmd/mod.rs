mod curate;
mod eval;
mod generate;
mod rig;
mod template;
mod toy;
mod train;

pub use curate::{curate, CurateArgs};
pub use eval::{eval, EvalArgs};
pub use generate::{generate, GenerateArgs};
pub use rig::{rig_synth, RigSynthArgs};
pub use template::{template_extract, trajectory_gen, TemplateExtractArgs, TrajectoryGenArgs};
pub use toy::{toy_corpus, ToyCorpusArgs};
pub use train::{train, TrainArgs};

use std::path::Path;

use anyhow::{Context, Result};
use talkhead_core::flame::{to_absolute, ParamSequence, SequenceLayout};
use talkhead_core::io::read_sequence;

/// Reads a parameter file and returns it in absolute form.
pub(crate) fn read_absolute(path: &Path) -> Result<ParamSequence> {
    let seq = read_sequence(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match seq.layout() {
        SequenceLayout::Absolute => seq,
        SequenceLayout::Differential => to_absolute(&seq)?,
    })
}
