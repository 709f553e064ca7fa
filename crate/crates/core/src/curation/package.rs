use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::CurationConfig;
use crate::error::{Error, Result};
use crate::flame::{to_differential, SequenceLayout};
use crate::io::{read_bytes, read_sequence, write_sequence};

/// One line of the newline-delimited curation manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub source: String,
    pub output: String,
    /// Stored differential rows (animated frames after the reference).
    pub n_frames: usize,
    pub fps: f64,
}

/// Converts an absolute parameter file to differential form and writes it to `output`.
pub fn package_sequence(
    id: &str,
    source: impl AsRef<Path>,
    output: impl AsRef<Path>,
    config: &CurationConfig,
) -> Result<ManifestRow> {
    let (source, output) = (source.as_ref(), output.as_ref());
    let seq = read_sequence(source)?;
    if seq.layout() != SequenceLayout::Absolute {
        return Err(Error::Invalid(format!(
            "{} is not an absolute sequence",
            source.display()
        )));
    }
    if (seq.fps() - config.target_fps).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "{}: fps {} does not match target {}",
            source.display(),
            seq.fps(),
            config.target_fps
        )));
    }
    let diff = to_differential(&seq)?;
    write_sequence(
        output,
        &diff,
        Some(json!({ "id": id, "source": source.display().to_string() })),
    )?;
    Ok(ManifestRow {
        id: id.to_string(),
        source: source.display().to_string(),
        output: output.display().to_string(),
        n_frames: diff.n_rows(),
        fps: diff.fps(),
    })
}

pub fn append_manifest_row(path: impl AsRef<Path>, row: &ManifestRow) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_string(row)?;
    line.push('\n');
    file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_manifest_rows(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let bytes = read_bytes(path.as_ref())?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Invalid(format!("manifest is not UTF-8: {e}")))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
