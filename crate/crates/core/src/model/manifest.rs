use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::TrainingSample;
use super::ConditioningBundle;
use crate::error::{Error, Result};
use crate::flame::{to_differential, SequenceLayout};
use crate::io::{read_bytes, read_sequence, read_track};

/// Files for one training sample. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Absolute sequence whose first row is the reference frame.
    #[serde(rename = "ref")]
    pub reference: PathBuf,
    /// Differential sequence of targets, or an absolute sequence that is converted.
    pub target: PathBuf,
    pub linguistic: PathBuf,
    pub amplitude: PathBuf,
    pub emotion: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub samples: Vec<ManifestEntry>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ManifestEntry {
    pub fn load(&self, base: &Path) -> Result<TrainingSample> {
        let reference = read_sequence(resolve(base, &self.reference))?;
        let x_ref = reference.frames().row(0).to_owned();
        let target = read_sequence(resolve(base, &self.target))?;
        let target = match target.layout() {
            SequenceLayout::Differential => target,
            SequenceLayout::Absolute => to_differential(&target)?,
        };
        if target.reference().is_some_and(|r| *r != x_ref) {
            log::warn!(
                "target {} carries a different reference than {}; using the latter",
                self.target.display(),
                self.reference.display()
            );
        }
        let cond = ConditioningBundle::new(
            read_track(resolve(base, &self.linguistic))?,
            read_track(resolve(base, &self.amplitude))?,
            read_track(resolve(base, &self.emotion))?,
        )?;
        TrainingSample::new(x_ref, target.into_frames(), cond)
    }
}

/// Reads a manifest and every file it lists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<TrainingSample>> {
    let path = path.as_ref();
    let manifest: TrainingManifest = serde_json::from_slice(&read_bytes(path)?)
        .map_err(|e| Error::Invalid(format!("manifest {}: {e}", path.display())))?;
    if manifest.samples.is_empty() {
        return Err(Error::Empty("training manifest"));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    manifest.samples.iter().map(|e| e.load(base)).collect()
}
