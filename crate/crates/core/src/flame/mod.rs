//! Parametric head model: parameter vectors, rig decoding and sequence forms.
//!
//! A frame of parameters is laid out as `[beta | theta | psi | delta]`, where
//! `theta` is split into the global head rotation (first three entries) and the
//! jaw rotation (last three), both axis-angle in radians.

mod params;
mod rig;
mod rotation;
mod sequence;
mod skinning;

pub use params::{FlameParams, StateLayout, BETA_DIM, DELTA_DIM, PSI_DIM, STATE_DIM, THETA_DIM};
pub use rig::{synthetic_rig, HeadRig, SyntheticRigSpec};
pub use rotation::{rodrigues, Mat3};
pub use sequence::{to_absolute, to_differential, ParamSequence, SequenceLayout};
pub use skinning::{blend_shapes, decode, decode_with_detail, join_pose, lbs, split_pose, Mesh};
