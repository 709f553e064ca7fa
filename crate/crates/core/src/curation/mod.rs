//! Dataset curation decisions: stitching short clips, quality gating, crop
//! geometry and packaging parameter tracks into differential form. Video and
//! audio are never touched; the plan is executed by external tooling.

mod config;
mod package;
mod quality;
mod stitch;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{ClipMeta, CurationConfig, Sidecar};
pub use package::{append_manifest_row, package_sequence, read_manifest_rows, ManifestRow};
pub use quality::{crop_geometry, gate, snr_estimate, CropGeometry, GateDecision};
pub use stitch::{stitch_clips, Rejection, StitchGroup, StitchOutcome, BELOW_MINIMUM, OUTSIDE_TARGET};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum PlanAction {
    Accept {
        /// Index into the accepted groups, in plan order.
        group: usize,
        group_clips: Vec<String>,
        group_duration_s: f64,
        crop: CropGeometry,
    },
    Reject {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub clip_id: String,
    #[serde(flatten)]
    pub action: PlanAction,
}

/// Worst score of each kind across a group; missing if any member lacks it.
fn group_sidecar(members: &[&ClipMeta]) -> Sidecar {
    let worst = |get: fn(&Sidecar) -> Option<f64>| {
        members
            .iter()
            .map(|m| get(&m.sidecar))
            .try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v)))
    };
    Sidecar {
        language_conf: worst(|s| s.language_conf),
        sync_conf: worst(|s| s.sync_conf),
        snr_db: worst(|s| s.snr_db),
    }
}

/// One plan entry per input clip, in input order.
///
/// Clips are stitched first; each stitched group is then gated as a single
/// clip whose duration is the group total and whose scores are the worst of
/// its members. Accepted clips carry their own crop geometry.
pub fn plan(clips: &[ClipMeta], config: &CurationConfig) -> Result<Vec<PlanEntry>> {
    config.validate()?;
    let mut seen = BTreeSet::new();
    for c in clips {
        c.validate()?;
        if !seen.insert(c.id.as_str()) {
            return Err(Error::Invalid(format!("duplicate clip id '{}'", c.id)));
        }
    }
    let by_id: BTreeMap<&str, &ClipMeta> = clips.iter().map(|c| (c.id.as_str(), c)).collect();
    let stitched = stitch_clips(clips, config);

    let mut actions: BTreeMap<&str, PlanAction> = BTreeMap::new();
    for r in &stitched.rejected {
        actions.insert(
            by_id[r.clip_id.as_str()].id.as_str(),
            PlanAction::Reject {
                reason: r.reason.clone(),
            },
        );
    }
    let mut accepted = 0;
    for g in &stitched.groups {
        let members: Vec<&ClipMeta> = g.clip_ids.iter().map(|id| by_id[id.as_str()]).collect();
        let merged = ClipMeta {
            id: g.clip_ids.join("+"),
            identity_key: g.identity_key.clone(),
            emotion_label: g.emotion_label.clone(),
            duration_s: g.duration_s,
            width: members[0].width,
            height: members[0].height,
            fps: members[0].fps,
            sidecar: group_sidecar(&members),
        };
        match gate(&merged, config) {
            GateDecision::Accept => {
                for m in &members {
                    let crop = crop_geometry(m.width, m.height, config.target_resolution)?;
                    actions.insert(
                        m.id.as_str(),
                        PlanAction::Accept {
                            group: accepted,
                            group_clips: g.clip_ids.clone(),
                            group_duration_s: g.duration_s,
                            crop,
                        },
                    );
                }
                accepted += 1;
            }
            GateDecision::Reject(reason) => {
                for m in &members {
                    actions.insert(m.id.as_str(), PlanAction::Reject { reason: reason.clone() });
                }
            }
        }
    }
    Ok(clips
        .iter()
        .map(|c| PlanEntry {
            clip_id: c.id.clone(),
            action: actions
                .remove(c.id.as_str())
                .expect("every clip is stitched or rejected"),
        })
        .collect())
}

pub fn plan_json(entries: &[PlanEntry]) -> Result<String> {
    Ok(serde_json::to_string_pretty(entries)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(id: &str, who: &str, secs: f64, snr: f64, lang: Option<f64>, sync: f64) -> ClipMeta {
        ClipMeta {
            id: id.into(),
            identity_key: who.into(),
            emotion_label: Some("Happy".into()),
            duration_s: secs,
            width: 1280,
            height: 720,
            fps: 25.0,
            sidecar: Sidecar {
                snr_db: Some(snr),
                language_conf: lang,
                sync_conf: Some(sync),
            },
        }
    }

    #[test]
    fn group_scores_take_the_worst_member() {
        let clips = vec![
            clip("a", "p", 6.0, 30.0, Some(0.9), 6.0),
            clip("b", "p", 6.0, 18.0, Some(0.95), 2.0),
        ];
        let entries = plan(&clips, &CurationConfig::default()).unwrap();
        for e in &entries {
            assert_eq!(e.action, PlanAction::Reject { reason: "sync".into() });
        }
        let clips = vec![
            clip("a", "p", 6.0, 30.0, Some(0.9), 6.0),
            clip("b", "p", 6.0, 18.0, None, 4.0),
        ];
        let entries = plan(&clips, &CurationConfig::default()).unwrap();
        assert_eq!(
            entries[0].action,
            PlanAction::Reject {
                reason: "score missing: language".into()
            }
        );
    }

    #[test]
    fn accepted_entries_carry_crop_and_group() {
        let clips = vec![clip("a", "p", 12.0, 30.0, Some(0.9), 6.0)];
        let entries = plan(&clips, &CurationConfig::default()).unwrap();
        match &entries[0].action {
            PlanAction::Accept { group, crop, .. } => {
                assert_eq!(*group, 0);
                assert_eq!((crop.scaled_w, crop.crop_x), (910, 199));
            }
            other => panic!("{other:?}"),
        }
        let json = plan_json(&entries).unwrap();
        assert!(json.contains("\"action\": \"accept\""));
        let back: Vec<PlanEntry> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, entries);
    }

    #[test]
    fn empty_input_gives_empty_plan() {
        assert!(plan(&[], &CurationConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let c = clip("a", "p", 12.0, 30.0, Some(0.9), 6.0);
        assert!(plan(&[c.clone(), c], &CurationConfig::default()).is_err());
    }
}
