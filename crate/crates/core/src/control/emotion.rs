use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flame::{ParamSequence, SequenceLayout};
use crate::io::read_bytes;

/// Intensity levels with a defined meaning; other values are accepted with a warning.
pub const ALPHA_LEVELS: [f64; 6] = [1.0, 1.2, 1.4, 1.6, 1.8, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EmotionLabel {
    Angry,
    Contempt,
    Disgust,
    Fear,
    Happy,
    Sad,
    Surprise,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 7] = [
        EmotionLabel::Angry,
        EmotionLabel::Contempt,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Happy,
        EmotionLabel::Sad,
        EmotionLabel::Surprise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Angry => "Angry",
            EmotionLabel::Contempt => "Contempt",
            EmotionLabel::Disgust => "Disgust",
            EmotionLabel::Fear => "Fear",
            EmotionLabel::Happy => "Happy",
            EmotionLabel::Sad => "Sad",
            EmotionLabel::Surprise => "Surprise",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        EmotionLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let names: Vec<&str> = EmotionLabel::ALL.iter().map(|l| l.as_str()).collect();
                Error::Invalid(format!("unknown emotion '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Mean expression vector of one emotion category.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionTemplate {
    label: EmotionLabel,
    psi_bar: Array1<f64>,
}

impl EmotionTemplate {
    pub fn new(label: EmotionLabel, psi_bar: Array1<f64>) -> Result<Self> {
        if psi_bar.is_empty() {
            return Err(Error::Empty("emotion template"));
        }
        if psi_bar.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{label} template")));
        }
        Ok(Self { label, psi_bar })
    }

    pub fn label(&self) -> EmotionLabel {
        self.label
    }

    pub fn psi_bar(&self) -> &Array1<f64> {
        &self.psi_bar
    }
}

/// Templates keyed by label; serialized as `{label: [floats]}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<EmotionLabel, EmotionTemplate>,
}

impl TemplateSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces; every template in a set must share one length.
    pub fn insert(&mut self, template: EmotionTemplate) -> Result<()> {
        if let Some(dim) = self.dim() {
            if template.psi_bar.len() != dim {
                return Err(Error::shape("template length", dim, template.psi_bar.len()));
            }
        }
        self.templates.insert(template.label, template);
        Ok(())
    }

    pub fn get(&self, label: EmotionLabel) -> Result<&EmotionTemplate> {
        self.templates
            .get(&label)
            .ok_or_else(|| Error::Invalid(format!("no template for {label}")))
    }

    pub fn dim(&self) -> Option<usize> {
        self.templates.values().next().map(|t| t.psi_bar.len())
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmotionTemplate> {
        self.templates.values()
    }

    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<&str, Vec<f64>> = self
            .templates
            .values()
            .map(|t| (t.label.as_str(), t.psi_bar.to_vec()))
            .collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, Vec<f64>> = serde_json::from_str(text)?;
        let mut set = Self::new();
        for (name, values) in map {
            set.insert(EmotionTemplate::new(name.parse()?, Array1::from(values))?)?;
        }
        Ok(set)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = read_bytes(path.as_ref())?;
        let text =
            std::str::from_utf8(&bytes).map_err(|e| Error::Invalid(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Mean over every frame of every session, as if the sessions were concatenated.
pub fn extract_template(sessions: &[Array2<f64>], label: EmotionLabel) -> Result<EmotionTemplate> {
    let dim = sessions
        .iter()
        .find(|m| m.nrows() > 0)
        .map(|m| m.ncols())
        .ok_or(Error::Empty("template sessions"))?;
    let mut sum = Array1::<f64>::zeros(dim);
    let mut count = 0usize;
    for m in sessions.iter().filter(|m| m.nrows() > 0) {
        if m.ncols() != dim {
            return Err(Error::shape("session columns", dim, m.ncols()));
        }
        for row in m.rows() {
            sum += &row;
        }
        count += m.nrows();
    }
    EmotionTemplate::new(label, sum / count as f64)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() {
        return Err(Error::NonFinite("alpha".into()));
    }
    if !ALPHA_LEVELS.iter().any(|a| (a - alpha).abs() < 1e-9) {
        log::warn!("alpha {alpha} is not one of the intensity levels {ALPHA_LEVELS:?}");
    }
    Ok(())
}

/// `(1 - lambda) * psi_ref + lambda * alpha * psi_bar`.
pub fn scale_emotion(
    psi_ref: ArrayView1<f64>,
    template: &EmotionTemplate,
    lambda: f64,
    alpha: f64,
) -> Result<Array1<f64>> {
    check_lambda(lambda)?;
    check_alpha(alpha)?;
    scale_unchecked(psi_ref, template.psi_bar(), lambda, alpha)
}

fn scale_unchecked(psi_ref: ArrayView1<f64>, psi_bar: &Array1<f64>, lambda: f64, alpha: f64) -> Result<Array1<f64>> {
    if psi_ref.len() != psi_bar.len() {
        return Err(Error::shape("expression length", psi_bar.len(), psi_ref.len()));
    }
    if lambda == 0.0 {
        return Ok(psi_ref.to_owned());
    }
    if lambda == 1.0 && alpha == 1.0 {
        return Ok(psi_bar.clone());
    }
    let keep = 1.0 - lambda;
    let gain = lambda * alpha;
    Ok(ndarray::Zip::from(&psi_ref)
        .and(psi_bar)
        .map_collect(|r, p| keep * r + gain * p))
}

fn one() -> f64 {
    1.0
}

/// One emotion applied over frames `start..end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionSegment {
    pub label: EmotionLabel,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSchedule {
    pub segments: Vec<EmotionSegment>,
    /// Crossfade length across the boundary of two adjacent segments.
    #[serde(default = "default_blend")]
    pub blend_frames: usize,
}

pub const DEFAULT_BLEND_FRAMES: usize = 8;

fn default_blend() -> usize {
    DEFAULT_BLEND_FRAMES
}

impl TransitionSchedule {
    /// A single segment covering all `n_frames`.
    pub fn constant(label: EmotionLabel, n_frames: usize, lambda: f64, alpha: f64) -> Self {
        Self {
            segments: vec![EmotionSegment {
                label,
                start: 0,
                end: n_frames,
                lambda,
                alpha,
            }],
            blend_frames: 0,
        }
    }

    pub fn validate(&self, n_frames: usize) -> Result<()> {
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.start >= seg.end {
                return Err(Error::Invalid(format!(
                    "segment {i} is empty ({}..{})",
                    seg.start, seg.end
                )));
            }
            if seg.end > n_frames {
                return Err(Error::Invalid(format!(
                    "segment {i} ends at {} beyond {n_frames} frames",
                    seg.end
                )));
            }
            check_lambda(seg.lambda)?;
            check_alpha(seg.alpha)?;
            if i > 0 && self.segments[i - 1].end > seg.start {
                return Err(Error::Invalid(format!(
                    "segment {i} overlaps or precedes segment {}",
                    i - 1
                )));
            }
        }
        Ok(())
    }
}

/// Applies a schedule to an N×P expression track.
///
/// Inside a segment each frame is scaled toward its template. Where two
/// segments touch, the per-frame results of both are mixed with a linear ramp
/// centred on the boundary frame, which receives an even split. Frames outside
/// every segment are copied unchanged.
pub fn schedule_emotions(
    schedule: &TransitionSchedule,
    templates: &TemplateSet,
    psi_track: &Array2<f64>,
) -> Result<Array2<f64>> {
    let n = psi_track.nrows();
    schedule.validate(n)?;
    let segs = &schedule.segments;
    let bars = segs
        .iter()
        .map(|seg| {
            let bar = templates.get(seg.label)?.psi_bar();
            if bar.len() != psi_track.ncols() {
                return Err(Error::shape("template length", psi_track.ncols(), bar.len()));
            }
            Ok(bar)
        })
        .collect::<Result<Vec<_>>>()?;
    let blend = schedule.blend_frames as f64;
    let scaled = |i: usize, f: usize| scale_unchecked(psi_track.row(f), bars[i], segs[i].lambda, segs[i].alpha);

    let mut out = psi_track.clone();
    for (i, seg) in segs.iter().enumerate() {
        let prev_touches = i > 0 && segs[i - 1].end == seg.start;
        let next_touches = i + 1 < segs.len() && segs[i + 1].start == seg.end;
        for f in seg.start..seg.end {
            let mut w_prev = 0.0;
            let mut w_next = 0.0;
            if blend > 0.0 {
                if prev_touches {
                    w_prev = (0.5 - (f - seg.start) as f64 / blend).clamp(0.0, 1.0);
                }
                if next_touches {
                    w_next = (0.5 - (seg.end - f) as f64 / blend).clamp(0.0, 1.0);
                }
            }
            let own = scaled(i, f)?;
            let row = if w_prev == 0.0 && w_next == 0.0 {
                own
            } else {
                let mut mix = own * (1.0 - w_prev - w_next);
                if w_prev > 0.0 {
                    mix.scaled_add(w_prev, &scaled(i - 1, f)?);
                }
                if w_next > 0.0 {
                    mix.scaled_add(w_next, &scaled(i + 1, f)?);
                }
                mix
            };
            out.row_mut(f).assign(&row);
        }
    }
    Ok(out)
}

/// Applies a schedule to the expression columns of the animated frames.
///
/// For an absolute sequence row 0 is the reference frame and stays as given;
/// schedule frame `k` addresses row `k + 1`. A differential sequence has no
/// stored reference row, so frame `k` addresses row `k`.
pub fn apply_emotion_schedule(
    seq: &ParamSequence,
    schedule: &TransitionSchedule,
    templates: &TemplateSet,
) -> Result<ParamSequence> {
    let skip = match seq.layout() {
        SequenceLayout::Absolute => 1,
        SequenceLayout::Differential => 0,
    };
    let psi = seq.dims().psi_range();
    let track = seq.frames().slice(s![skip.., psi.clone()]).to_owned();
    let modulated = schedule_emotions(schedule, templates, &track)?;
    let mut out = seq.clone();
    out.frames_mut().slice_mut(s![skip.., psi]).assign(&modulated);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn template(label: EmotionLabel, v: Array1<f64>) -> EmotionTemplate {
        EmotionTemplate::new(label, v).unwrap()
    }

    #[test]
    fn labels_parse_case_insensitively() {
        assert_eq!("happy".parse::<EmotionLabel>().unwrap(), EmotionLabel::Happy);
        assert_eq!("SURPRISE".parse::<EmotionLabel>().unwrap(), EmotionLabel::Surprise);
        assert!("Neutral".parse::<EmotionLabel>().is_err());
        for l in EmotionLabel::ALL {
            assert_eq!(l.to_string().parse::<EmotionLabel>().unwrap(), l);
        }
    }

    #[test]
    fn extract_trivial_cases() {
        let v = array![[1.0, -2.0, 3.5]];
        assert_eq!(
            extract_template(std::slice::from_ref(&v), EmotionLabel::Sad)
                .unwrap()
                .psi_bar(),
            &v.row(0).to_owned()
        );
        let two = array![[0.0, 0.0, 0.0], [1.0, -2.0, 3.5]];
        assert_eq!(
            extract_template(&[two], EmotionLabel::Sad).unwrap().psi_bar(),
            &array![0.5, -1.0, 1.75]
        );
    }

    #[test]
    fn extract_errors() {
        assert!(extract_template(&[], EmotionLabel::Fear).is_err());
        assert!(extract_template(&[Array2::zeros((0, 3))], EmotionLabel::Fear).is_err());
        assert!(extract_template(&[Array2::zeros((2, 3)), Array2::zeros((2, 4))], EmotionLabel::Fear).is_err());
    }

    #[test]
    fn scale_hand_computed() {
        let u = array![0.3, -1.2, 2.0];
        let t = template(EmotionLabel::Happy, u.clone());
        let out = scale_emotion(Array1::zeros(3).view(), &t, 0.5, 2.0).unwrap();
        assert_eq!(out, u);
        let r = array![1.0, 2.0, 3.0];
        assert_eq!(scale_emotion(r.view(), &t, 0.0, 1.6).unwrap(), r);
        assert_eq!(scale_emotion(r.view(), &t, 1.0, 1.0).unwrap(), u);
        assert!(scale_emotion(r.view(), &t, 1.5, 1.0).is_err());
        assert!(scale_emotion(array![1.0].view(), &t, 0.5, 1.0).is_err());
        // off-grid alpha is allowed
        assert!(scale_emotion(r.view(), &t, 0.5, 3.0).is_ok());
    }

    fn two_templates() -> TemplateSet {
        let mut set = TemplateSet::new();
        set.insert(template(EmotionLabel::Happy, array![1.0, 0.0])).unwrap();
        set.insert(template(EmotionLabel::Sad, array![0.0, -1.0])).unwrap();
        set
    }

    #[test]
    fn template_set_json_round_trip() {
        let set = two_templates();
        let back = TemplateSet::from_json(&set.to_json().unwrap()).unwrap();
        assert_eq!(back, set);
        assert!(TemplateSet::from_json(r#"{"Calm": [1.0]}"#).is_err());
        assert!(TemplateSet::from_json(r#"{"Happy": [1.0], "Sad": [1.0, 2.0]}"#).is_err());
    }

    #[test]
    fn empty_schedule_is_identity() {
        let track = Array2::from_shape_fn((6, 2), |(i, j)| (i * 2 + j) as f64 * 0.1);
        let sched = TransitionSchedule {
            segments: vec![],
            blend_frames: 4,
        };
        assert_eq!(schedule_emotions(&sched, &two_templates(), &track).unwrap(), track);
    }

    #[test]
    fn schedule_rejects_overlap_and_overrun() {
        let track = Array2::zeros((10, 2));
        let seg = |start, end| EmotionSegment {
            label: EmotionLabel::Happy,
            start,
            end,
            lambda: 1.0,
            alpha: 1.0,
        };
        let overlap = TransitionSchedule {
            segments: vec![seg(0, 5), seg(4, 8)],
            blend_frames: 0,
        };
        assert!(schedule_emotions(&overlap, &two_templates(), &track).is_err());
        let overrun = TransitionSchedule {
            segments: vec![seg(5, 11)],
            blend_frames: 0,
        };
        assert!(schedule_emotions(&overrun, &two_templates(), &track).is_err());
        let missing = TransitionSchedule {
            segments: vec![EmotionSegment {
                label: EmotionLabel::Fear,
                ..seg(0, 2)
            }],
            blend_frames: 0,
        };
        assert!(schedule_emotions(&missing, &two_templates(), &track).is_err());
    }

    #[test]
    fn schedule_json_defaults() {
        let s: TransitionSchedule =
            serde_json::from_str(r#"{"segments": [{"label": "Happy", "start": 0, "end": 4}]}"#).unwrap();
        assert_eq!(s.blend_frames, DEFAULT_BLEND_FRAMES);
        assert_eq!((s.segments[0].lambda, s.segments[0].alpha), (1.0, 1.0));
    }
}
