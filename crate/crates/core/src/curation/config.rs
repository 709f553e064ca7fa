use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_bytes;

/// Externally computed quality scores of one clip.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sidecar {
    pub language_conf: Option<f64>,
    pub sync_conf: Option<f64>,
    pub snr_db: Option<f64>,
}

impl Sidecar {
    /// Fields present in `other` replace those in `self`.
    pub fn merged(self, other: Sidecar) -> Sidecar {
        Sidecar {
            language_conf: other.language_conf.or(self.language_conf),
            sync_conf: other.sync_conf.or(self.sync_conf),
            snr_db: other.snr_db.or(self.snr_db),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&read_bytes(path.as_ref())?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub id: String,
    pub identity_key: String,
    #[serde(default)]
    pub emotion_label: Option<String>,
    pub duration_s: f64,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    #[serde(default)]
    pub sidecar: Sidecar,
}

impl ClipMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Invalid(format!("clip {}: duration must be positive", self.id)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid(format!("clip {}: frame size must be positive", self.id)));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Invalid(format!("clip {}: fps must be positive", self.id)));
        }
        Ok(())
    }
}

/// Thresholds have no published values; the defaults here are conventional choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    pub min_duration_s: f64,
    /// Inclusive duration range of a stitched group.
    pub stitch_target_s: [f64; 2],
    pub snr_min_db: f64,
    pub language_conf_min: f64,
    pub sync_conf_min: f64,
    pub target_resolution: u32,
    pub target_fps: f64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            min_duration_s: 10.0,
            stitch_target_s: [10.0, 20.0],
            snr_min_db: 15.0,
            language_conf_min: 0.8,
            sync_conf_min: 3.0,
            target_resolution: 512,
            target_fps: 25.0,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.min_duration_s,
            self.stitch_target_s[0],
            self.stitch_target_s[1],
            self.snr_min_db,
            self.language_conf_min,
            self.sync_conf_min,
            self.target_fps,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("curation thresholds must be finite".into()));
        }
        if self.stitch_target_s[0] > self.stitch_target_s[1] {
            return Err(Error::Invalid(format!(
                "stitch range {:?} is reversed",
                self.stitch_target_s
            )));
        }
        if self.target_resolution == 0 {
            return Err(Error::Invalid("target resolution must be positive".into()));
        }
        if self.target_fps <= 0.0 {
            return Err(Error::Invalid("target fps must be positive".into()));
        }
        Ok(())
    }
}
