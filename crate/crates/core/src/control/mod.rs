//! Inference-time controls: emotion templates and intensity, emotion
//! transitions, and head-pose trajectories layered over generated motion.

mod emotion;
mod trajectory;

pub use emotion::{
    apply_emotion_schedule, extract_template, scale_emotion, schedule_emotions, EmotionLabel, EmotionSegment,
    EmotionTemplate, TemplateSet, TransitionSchedule, ALPHA_LEVELS, DEFAULT_BLEND_FRAMES,
};
pub use trajectory::{gen_trajectory, superimpose, PoseAxis, TrajectoryKind, TrajectorySpec, DEFAULT_POSE_CLAMP};
