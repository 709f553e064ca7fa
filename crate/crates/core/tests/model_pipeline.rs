use talkhead_core::flame::{to_absolute, StateLayout};
use talkhead_core::model::{
    decode_checkpoint, encode_checkpoint, generate, predict_velocity, ModelConfig, ModelWeights,
};
use talkhead_core::synthetic::{toy_corpus, ToyCorpusSpec};

fn setup() -> (ModelWeights, Vec<talkhead_core::synthetic::ToyClip>) {
    let clips = toy_corpus(&ToyCorpusSpec {
        n_samples: 2,
        n_frames: 12,
        layout: StateLayout::TOY,
        ..ToyCorpusSpec::default()
    })
    .unwrap();
    let config = ModelConfig {
        state: StateLayout::TOY,
        ..ModelConfig::toy()
    };
    let mut weights = ModelWeights::init(&config).unwrap();
    weights.randomize(3, 0.1);
    (weights, clips)
}

#[test]
fn generation_is_seed_deterministic() {
    let (w, clips) = setup();
    let c = &clips[0];
    let a = generate(&w, c.reference(), &c.cond, 4, 11).unwrap();
    let b = generate(&w, c.reference(), &c.cond, 4, 11).unwrap();
    let other = generate(&w, c.reference(), &c.cond, 4, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.frames(), other.frames());
    assert_eq!(a.n_rows(), c.cond.n_frames());
    let abs = to_absolute(&a).unwrap();
    assert_eq!(abs.frames().row(0), c.reference().view());
}

#[test]
fn checkpoint_round_trip_preserves_the_velocity_field() {
    let (w, clips) = setup();
    let bytes = encode_checkpoint(&w, None).unwrap();
    let (back, _) = decode_checkpoint(&bytes).unwrap();
    assert_eq!(encode_checkpoint(&back, None).unwrap(), bytes);
    let c = &clips[1];
    let eps = c.target.frames();
    for t in [0.0, 0.3, 1.0] {
        let v1 = predict_velocity(&w, eps, c.reference(), &c.cond, t).unwrap();
        let v2 = predict_velocity(&back, eps, c.reference(), &c.cond, t).unwrap();
        // weights are stored as f32, so agreement is to single precision
        let scale = v1.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in v1.iter().zip(v2.iter()) {
            assert!((a - b).abs() <= 1e-4 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn velocity_rejects_mismatched_inputs() {
    let (w, clips) = setup();
    let c = &clips[0];
    let short = c.target.frames().slice(ndarray::s![..5, ..]).to_owned();
    assert!(predict_velocity(&w, &short, c.reference(), &c.cond, 0.5).is_err());
    assert!(predict_velocity(&w, c.target.frames(), c.reference(), &c.cond, 1.5).is_err());
    assert!(generate(&w, c.reference(), &c.cond, 0, 1).is_err());
}
