use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ClipMeta, CurationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchGroup {
    pub identity_key: String,
    pub emotion_label: Option<String>,
    pub clip_ids: Vec<String>,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub clip_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StitchOutcome {
    /// Ordered by the input position of each group's first clip.
    pub groups: Vec<StitchGroup>,
    pub rejected: Vec<Rejection>,
}

pub const BELOW_MINIMUM: &str = "below minimum duration";
pub const OUTSIDE_TARGET: &str = "stitched duration outside target range";

struct Open {
    first: usize,
    ids: Vec<String>,
    total: f64,
}

/// Greedy in-order packing per (identity, emotion) bucket.
///
/// Clips join their bucket's open group while the total stays within the
/// upper target bound; the next clip that would overflow closes it. A closed
/// group is kept when its total lies in the target range, or when it is a
/// single clip of at least `min_duration_s` (long clips pass through
/// unstitched). Otherwise every member is rejected.
pub fn stitch_clips(clips: &[ClipMeta], config: &CurationConfig) -> StitchOutcome {
    let [lo, hi] = config.stitch_target_s;
    let mut open: BTreeMap<(String, Option<String>), Open> = BTreeMap::new();
    let mut closed: Vec<(usize, StitchGroup)> = Vec::new();
    let mut rejected: Vec<(usize, Rejection)> = Vec::new();

    let mut close = |key: &(String, Option<String>), g: Open, closed: &mut Vec<(usize, StitchGroup)>| {
        let single_long = g.ids.len() == 1 && g.total >= config.min_duration_s;
        if (g.total >= lo && g.total <= hi) || single_long {
            closed.push((
                g.first,
                StitchGroup {
                    identity_key: key.0.clone(),
                    emotion_label: key.1.clone(),
                    clip_ids: g.ids,
                    duration_s: g.total,
                },
            ));
        } else {
            let reason = if g.total < config.min_duration_s {
                BELOW_MINIMUM
            } else {
                OUTSIDE_TARGET
            };
            for id in g.ids {
                rejected.push((
                    g.first,
                    Rejection {
                        clip_id: id,
                        reason: reason.into(),
                    },
                ));
            }
        }
    };

    for (i, clip) in clips.iter().enumerate() {
        let key = (clip.identity_key.clone(), clip.emotion_label.clone());
        match open.remove(&key) {
            Some(mut g) if g.total + clip.duration_s <= hi => {
                g.ids.push(clip.id.clone());
                g.total += clip.duration_s;
                open.insert(key, g);
            }
            prev => {
                if let Some(g) = prev {
                    close(&key, g, &mut closed);
                }
                open.insert(
                    key,
                    Open {
                        first: i,
                        ids: vec![clip.id.clone()],
                        total: clip.duration_s,
                    },
                );
            }
        }
    }
    for (key, g) in std::mem::take(&mut open) {
        close(&key, g, &mut closed);
    }
    closed.sort_by_key(|(first, _)| *first);
    rejected.sort_by_key(|(first, _)| *first);
    StitchOutcome {
        groups: closed.into_iter().map(|(_, g)| g).collect(),
        rejected: rejected.into_iter().map(|(_, r)| r).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::Sidecar;

    fn clip(id: &str, who: &str, emo: Option<&str>, secs: f64) -> ClipMeta {
        ClipMeta {
            id: id.into(),
            identity_key: who.into(),
            emotion_label: emo.map(Into::into),
            duration_s: secs,
            width: 512,
            height: 512,
            fps: 25.0,
            sidecar: Sidecar::default(),
        }
    }

    #[test]
    fn four_short_clips_make_one_group() {
        let clips: Vec<_> = (0..4)
            .map(|i| clip(&format!("c{i}"), "a", Some("Happy"), 4.0))
            .collect();
        let out = stitch_clips(&clips, &CurationConfig::default());
        assert_eq!(out.groups.len(), 1);
        assert_eq!(out.groups[0].duration_s, 16.0);
        assert_eq!(out.groups[0].clip_ids, vec!["c0", "c1", "c2", "c3"]);
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn single_clips() {
        let out = stitch_clips(&[clip("x", "a", None, 12.0)], &CurationConfig::default());
        assert_eq!(out.groups.len(), 1);
        let out = stitch_clips(&[clip("y", "a", None, 6.0)], &CurationConfig::default());
        assert!(out.groups.is_empty());
        assert_eq!(
            out.rejected,
            vec![Rejection {
                clip_id: "y".into(),
                reason: BELOW_MINIMUM.into()
            }]
        );
        let out = stitch_clips(&[clip("z", "a", None, 45.0)], &CurationConfig::default());
        assert_eq!(out.groups[0].clip_ids, vec!["z"]);
    }

    #[test]
    fn buckets_never_mix_and_overflow_closes_groups() {
        let clips = vec![
            clip("a1", "a", Some("Sad"), 8.0),
            clip("b1", "b", Some("Sad"), 8.0),
            clip("a2", "a", Some("Happy"), 8.0),
            clip("a3", "a", Some("Sad"), 8.0),
            clip("a4", "a", Some("Sad"), 8.0),
            clip("b2", "b", Some("Sad"), 3.0),
        ];
        let out = stitch_clips(&clips, &CurationConfig::default());
        // a/Sad: 8+8 = 16, then a4 overflows (24 > 20) and is left alone at 8 s
        assert_eq!(out.groups.len(), 2);
        assert_eq!(out.groups[0].clip_ids, vec!["a1", "a3"]);
        assert_eq!(out.groups[1].clip_ids, vec!["b1", "b2"]);
        let rejected: Vec<&str> = out.rejected.iter().map(|r| r.clip_id.as_str()).collect();
        assert_eq!(rejected, vec!["a2", "a4"]);
        for g in &out.groups {
            assert!(g.duration_s >= 10.0 && g.duration_s <= 20.0);
        }
    }
}
