//! Multi-branch flow-matching transformer: a shared backbone over noisy
//! differential parameters, conditioned on linguistic features, feeding
//! identity, pose and expression heads.

mod checkpoint;
mod config;
mod flow;
mod manifest;
mod network;
mod train;
mod weights;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointHeader, TensorEntry,
    CHECKPOINT_MAGIC,
};
pub use config::{LossMode, ModelConfig, TrainConfig};
pub use flow::{flow_loss, flow_target, generate, initial_noise, VelocityField};
pub use manifest::{load_manifest, ManifestEntry, TrainingManifest};
pub use network::{
    backbone, embed_state, expression_head, expression_head_ablated, identity_head, pose_head, pose_head_ablated,
    predict_velocity, timestep_embedding,
};
pub use train::{loss_and_gradients, sample_loss, train, train_with, OneCycle, TrainOutcome, TrainingSample};
pub use weights::ModelWeights;

use crate::audio::{FeatureTrack, TrackKind};
use crate::error::{Error, Result};

/// Frame-aligned conditioning streams for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    pub linguistic: FeatureTrack,
    pub amplitude: FeatureTrack,
    pub emotion: FeatureTrack,
}

impl ConditioningBundle {
    pub fn new(linguistic: FeatureTrack, amplitude: FeatureTrack, emotion: FeatureTrack) -> Result<Self> {
        let expect = [
            (&linguistic, TrackKind::Linguistic),
            (&amplitude, TrackKind::Amplitude),
            (&emotion, TrackKind::Emotion),
        ];
        for (track, kind) in expect {
            if track.kind() != kind {
                return Err(Error::Invalid(format!(
                    "expected a {kind:?} track, got {:?}",
                    track.kind()
                )));
            }
        }
        let n = linguistic.n_frames();
        for track in [&amplitude, &emotion] {
            if track.n_frames() != n {
                return Err(Error::shape("conditioning frame count", n, track.n_frames()));
            }
        }
        Ok(Self {
            linguistic,
            amplitude,
            emotion,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.linguistic.n_frames()
    }

    pub fn fps(&self) -> f64 {
        self.linguistic.fps()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn bundle_checks_kinds_and_lengths() {
        let l = FeatureTrack::new(Array2::zeros((4, 3)), 25.0, TrackKind::Linguistic).unwrap();
        let a = FeatureTrack::new(Array2::zeros((4, 1)), 25.0, TrackKind::Amplitude).unwrap();
        let e = FeatureTrack::new(Array2::zeros((4, 2)), 25.0, TrackKind::Emotion).unwrap();
        let short = FeatureTrack::new(Array2::zeros((3, 2)), 25.0, TrackKind::Emotion).unwrap();
        assert!(ConditioningBundle::new(l.clone(), a.clone(), e.clone()).is_ok());
        assert!(ConditioningBundle::new(l.clone(), a.clone(), short).is_err());
        assert!(ConditioningBundle::new(e.clone(), a, l).is_err());
    }
}
