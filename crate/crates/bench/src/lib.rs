//! Shared fixtures for the benchmarks.

use ndarray::Array2;
use talkhead_core::flame::{decode, synthetic_rig, FlameParams, HeadRig, StateLayout, SyntheticRigSpec};
use talkhead_core::model::{ModelConfig, ModelWeights};
use talkhead_core::synthetic::{toy_corpus, ToyClip, ToyCorpusSpec};

pub fn rig(n_vertices: usize) -> HeadRig {
    synthetic_rig(SyntheticRigSpec {
        n_vertices,
        n_joints: 2,
        shape_rank: 16,
        expr_rank: 16,
        seed: 1,
    })
    .expect("synthetic rig")
}

/// Parameters with every coefficient and both rotations non-zero.
pub fn busy_params(seed: usize) -> FlameParams {
    let mut p = FlameParams::zeros();
    for (i, v) in p.beta.iter_mut().chain(p.psi.iter_mut()).enumerate() {
        *v = (((i + seed) * 37 % 17) as f64 - 8.0) / 10.0;
    }
    p.theta = [0.05, 0.1 * (seed as f64).sin(), 0.0, 0.2, 0.0, 0.01];
    p
}

/// Decoded vertex frames for the metric benchmarks.
pub fn mesh_frames(rig: &HeadRig, n: usize, offset: usize) -> Vec<Array2<f64>> {
    (0..n)
        .map(|i| decode(rig, &busy_params(i + offset)).expect("decode").vertices)
        .collect()
}

pub fn toy_clip(n_frames: usize) -> ToyClip {
    let spec = ToyCorpusSpec {
        n_samples: 1,
        n_frames,
        layout: StateLayout::TOY,
        ..ToyCorpusSpec::default()
    };
    toy_corpus(&spec).expect("toy corpus").remove(0)
}

pub fn toy_weights() -> ModelWeights {
    let config = ModelConfig {
        state: StateLayout::TOY,
        ..ModelConfig::toy()
    };
    let mut w = ModelWeights::init(&config).expect("toy weights");
    w.randomize(3, 0.1);
    w
}
