use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flame::HeadRig;
use crate::io::read_bytes;

/// Vertex subsets used by the region metrics. Serialized as `{lip: [...], upper_face: [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMask {
    #[serde(rename = "lip")]
    pub lip_indices: Vec<usize>,
    #[serde(rename = "upper_face")]
    pub upper_face_indices: Vec<usize>,
}

impl RegionMask {
    pub fn validate(&self, n_vertices: usize) -> Result<()> {
        for (name, set) in [("lip", &self.lip_indices), ("upper_face", &self.upper_face_indices)] {
            if set.is_empty() {
                return Err(Error::Invalid(format!("{name} mask is empty")));
            }
            if let Some(v) = set.iter().find(|&&v| v >= n_vertices) {
                return Err(Error::Invalid(format!(
                    "{name} mask index {v} out of range for {n_vertices} vertices"
                )));
            }
        }
        let lip: BTreeSet<_> = self.lip_indices.iter().collect();
        let shared = self.upper_face_indices.iter().filter(|v| lip.contains(v)).count();
        if shared > 0 {
            log::warn!("lip and upper-face masks share {shared} vertices");
        }
        Ok(())
    }

    /// Masks for the procedural test rig: front-facing vertices below the
    /// head centre form the lip region, those above it the upper face.
    pub fn for_synthetic_rig(rig: &HeadRig) -> Self {
        let t = rig.template();
        let pick = |upper: bool| {
            let score = |v: usize| {
                let y = if upper { t[[v, 1]] } else { -t[[v, 1]] };
                (y, t[[v, 2]])
            };
            let set: Vec<usize> = (0..t.nrows())
                .filter(|&v| {
                    let (y, z) = score(v);
                    y > 0.0 && z > 0.0
                })
                .collect();
            if set.is_empty() {
                let best = (0..t.nrows())
                    .max_by(|&a, &b| {
                        let (sa, sb) = (score(a), score(b));
                        (sa.0 + sa.1).total_cmp(&(sb.0 + sb.1))
                    })
                    .unwrap_or(0);
                vec![best]
            } else {
                set
            }
        };
        Self {
            lip_indices: pick(false),
            upper_face_indices: pick(true),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&read_bytes(path.as_ref())?)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Per-frame aggregation over lip vertices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LipAggregate {
    #[default]
    Mean,
    Max,
}

fn check_pair(pred: &[Array2<f64>], gt: &[Array2<f64>]) -> Result<usize> {
    if pred.len() != gt.len() {
        return Err(Error::shape("metric frame count", gt.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::Empty("metric frames"));
    }
    let dim = gt[0].dim();
    if dim.1 != 3 {
        return Err(Error::shape("vertex columns", 3, dim.1));
    }
    for (p, g) in pred.iter().zip(gt) {
        if p.dim() != dim || g.dim() != dim {
            return Err(Error::shape(
                "frame vertices",
                format!("{dim:?}"),
                format!("{:?}", p.dim()),
            ));
        }
    }
    Ok(dim.0)
}

fn check_indices(indices: &[usize], n_vertices: usize, name: &'static str) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Empty(name));
    }
    if let Some(v) = indices.iter().find(|&&v| v >= n_vertices) {
        return Err(Error::Invalid(format!(
            "{name} index {v} out of range for {n_vertices} vertices"
        )));
    }
    Ok(())
}

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn region_error(pred: &[Array2<f64>], gt: &[Array2<f64>], indices: &[usize], agg: LipAggregate) -> f64 {
    let per_frame = pred.iter().zip(gt).map(|(p, g)| {
        let d = indices.iter().map(|&v| dist(p.row(v), g.row(v)));
        match agg {
            LipAggregate::Mean => d.sum::<f64>() / indices.len() as f64,
            LipAggregate::Max => d.fold(0.0, f64::max),
        }
    });
    per_frame.sum::<f64>() / pred.len() as f64
}

/// Mean per-vertex Euclidean distance over all frames and vertices.
pub fn mve(pred: &[Array2<f64>], gt: &[Array2<f64>]) -> Result<f64> {
    let v = check_pair(pred, gt)?;
    let all: Vec<usize> = (0..v).collect();
    Ok(region_error(pred, gt, &all, LipAggregate::Mean))
}

/// Vertex error over the lip region, aggregated per frame by mean or max.
pub fn lve(pred: &[Array2<f64>], gt: &[Array2<f64>], mask: &RegionMask, agg: LipAggregate) -> Result<f64> {
    let v = check_pair(pred, gt)?;
    check_indices(&mask.lip_indices, v, "lip mask")?;
    Ok(region_error(pred, gt, &mask.lip_indices, agg))
}

/// Mean vertex error over the upper-face region.
pub fn ufve(pred: &[Array2<f64>], gt: &[Array2<f64>], mask: &RegionMask) -> Result<f64> {
    let v = check_pair(pred, gt)?;
    check_indices(&mask.upper_face_indices, v, "upper-face mask")?;
    Ok(region_error(pred, gt, &mask.upper_face_indices, LipAggregate::Mean))
}

/// Temporal standard deviation of each vertex's distance from its frame-0 position.
fn dynamics(frames: &[Array2<f64>], indices: &[usize]) -> Vec<f64> {
    let n = frames.len() as f64;
    indices
        .iter()
        .map(|&v| {
            let mags: Vec<f64> = frames.iter().map(|f| dist(f.row(v), frames[0].row(v))).collect();
            let mean = mags.iter().sum::<f64>() / n;
            (mags.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// Mean absolute difference of per-vertex motion variability over the upper face.
pub fn ufdd(pred: &[Array2<f64>], gt: &[Array2<f64>], mask: &RegionMask) -> Result<f64> {
    let v = check_pair(pred, gt)?;
    if pred.len() < 2 {
        return Err(Error::Invalid("facial dynamics need at least 2 frames".into()));
    }
    check_indices(&mask.upper_face_indices, v, "upper-face mask")?;
    let dp = dynamics(pred, &mask.upper_face_indices);
    let dg = dynamics(gt, &mask.upper_face_indices);
    Ok(dp.iter().zip(&dg).map(|(a, b)| (a - b).abs()).sum::<f64>() / dp.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flame::{synthetic_rig, SyntheticRigSpec};

    fn frames(n: usize, v: usize, f: impl Fn(usize, usize, usize) -> f64) -> Vec<Array2<f64>> {
        (0..n)
            .map(|i| Array2::from_shape_fn((v, 3), |(r, c)| f(i, r, c)))
            .collect()
    }

    #[test]
    fn synthetic_masks_are_valid_and_disjoint() {
        let rig = synthetic_rig(SyntheticRigSpec::default()).unwrap();
        let m = RegionMask::for_synthetic_rig(&rig);
        m.validate(rig.n_vertices()).unwrap();
        assert!(m.lip_indices.iter().all(|v| !m.upper_face_indices.contains(v)));
        for &v in &m.lip_indices {
            assert!(rig.template()[[v, 1]] < 0.0);
        }
    }

    #[test]
    fn mask_validation() {
        let m = RegionMask {
            lip_indices: vec![],
            upper_face_indices: vec![1],
        };
        assert!(m.validate(4).is_err());
        let m = RegionMask {
            lip_indices: vec![4],
            upper_face_indices: vec![1],
        };
        assert!(m.validate(4).is_err());
        let m = RegionMask {
            lip_indices: vec![1],
            upper_face_indices: vec![1],
        };
        assert!(m.validate(4).is_ok());
    }

    #[test]
    fn mask_json_keys() {
        let m: RegionMask = serde_json::from_str(r#"{"lip": [1, 2], "upper_face": [0]}"#).unwrap();
        assert_eq!(m.lip_indices, vec![1, 2]);
        assert_eq!(m.upper_face_indices, vec![0]);
    }

    #[test]
    fn lip_offset_dilutes_in_mve() {
        let gt = frames(3, 10, |i, r, c| (i * 31 + r * 7 + c) as f64 * 0.01);
        let mask = RegionMask {
            lip_indices: vec![2, 5],
            upper_face_indices: vec![0, 1],
        };
        let mut pred = gt.clone();
        for f in &mut pred {
            for &v in &mask.lip_indices {
                f[[v, 0]] += 0.5;
            }
        }
        assert!((lve(&pred, &gt, &mask, LipAggregate::Mean).unwrap() - 0.5).abs() < 1e-12);
        assert!((lve(&pred, &gt, &mask, LipAggregate::Max).unwrap() - 0.5).abs() < 1e-12);
        assert!((mve(&pred, &gt).unwrap() - 0.5 * 2.0 / 10.0).abs() < 1e-12);
        assert_eq!(ufve(&pred, &gt, &mask).unwrap(), 0.0);
    }

    #[test]
    fn max_aggregate_picks_worst_vertex() {
        let gt = frames(1, 3, |_, _, _| 0.0);
        let pred = frames(1, 3, |_, r, c| if c == 0 { r as f64 } else { 0.0 });
        let mask = RegionMask {
            lip_indices: vec![0, 1, 2],
            upper_face_indices: vec![0],
        };
        assert_eq!(lve(&pred, &gt, &mask, LipAggregate::Max).unwrap(), 2.0);
        assert_eq!(lve(&pred, &gt, &mask, LipAggregate::Mean).unwrap(), 1.0);
    }

    #[test]
    fn shape_errors() {
        let a = frames(2, 4, |_, _, _| 0.0);
        let b = frames(3, 4, |_, _, _| 0.0);
        let c = frames(2, 5, |_, _, _| 0.0);
        assert!(mve(&a, &b).is_err());
        assert!(mve(&a, &c).is_err());
        assert!(mve(&[], &[]).is_err());
        let empty = RegionMask {
            lip_indices: vec![],
            upper_face_indices: vec![],
        };
        assert!(lve(&a, &a, &empty, LipAggregate::Mean).is_err());
        let one = frames(1, 4, |_, _, _| 0.0);
        let mask = RegionMask {
            lip_indices: vec![0],
            upper_face_indices: vec![1],
        };
        assert!(ufdd(&one, &one, &mask).is_err());
    }

    #[test]
    fn static_sequences_have_no_dynamics_gap() {
        let pred = frames(5, 4, |_, r, c| (r + c) as f64);
        let gt = frames(5, 4, |_, r, c| (r * c) as f64 + 3.0);
        let mask = RegionMask {
            lip_indices: vec![0],
            upper_face_indices: vec![1, 2, 3],
        };
        assert_eq!(ufdd(&pred, &gt, &mask).unwrap(), 0.0);
    }

    #[test]
    fn sinusoid_dynamics_match_closed_form() {
        // one vertex oscillating along x with amplitude a vs 2a over one full period
        let n = 4000;
        let a = 1.0;
        let wave = |amp: f64| {
            frames(n, 1, move |i, _, c| {
                if c == 0 {
                    amp * (std::f64::consts::TAU * i as f64 / n as f64).sin()
                } else {
                    0.0
                }
            })
        };
        let mask = RegionMask {
            lip_indices: vec![0],
            upper_face_indices: vec![0],
        };
        let got = ufdd(&wave(a), &wave(2.0 * a), &mask).unwrap();
        // |sin| has mean 2/pi and mean square 1/2
        let std_abs_sin = (0.5 - 4.0 / std::f64::consts::PI.powi(2)).sqrt();
        assert!((got - a * std_abs_sin).abs() < 1e-6, "{got}");
    }
}
