use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use std::hint::black_box;
use talkhead_bench::{busy_params, mesh_frames, rig, toy_clip, toy_weights};
use talkhead_core::audio::{amplitude_envelope, audio_beats, BeatDetectorConfig, CONDITIONING_ENVELOPE};
use talkhead_core::flame::decode;
use talkhead_core::metrics::{evaluate, EvalInput, MetricsConfig, RegionMask};
use talkhead_core::model::{generate, initial_noise, loss_and_gradients, predict_velocity, LossMode};

fn decoding(c: &mut Criterion) {
    let mut group = c.benchmark_group("decode");
    for v in [500, 5000] {
        let rig = rig(v);
        let p = busy_params(3);
        group.bench_with_input(BenchmarkId::from_parameter(v), &v, |b, _| {
            b.iter(|| decode(&rig, black_box(&p)).unwrap())
        });
    }
    group.finish();
}

fn model(c: &mut Criterion) {
    let weights = toy_weights();
    let clip = toy_clip(32);
    let n = clip.cond.n_frames();
    let dim = clip.reference().len();
    let eps = initial_noise(n, dim, 1);
    c.bench_function("velocity_forward_32f", |b| {
        b.iter(|| predict_velocity(&weights, black_box(&eps), clip.reference(), &clip.cond, 0.5).unwrap())
    });
    let sample = clip.sample();
    c.bench_function("loss_and_gradients_32f", |b| {
        b.iter(|| loss_and_gradients(&weights, &sample, 0.4, black_box(&eps), LossMode::Rectified).unwrap())
    });
    c.bench_function("generate_32f_T8", |b| {
        b.iter(|| generate(&weights, clip.reference(), &clip.cond, 8, black_box(5)).unwrap())
    });
}

fn audio_and_metrics(c: &mut Criterion) {
    let clip = toy_clip(100);
    let wav = &clip.waveform;
    c.bench_function("amplitude_envelope_4s", |b| {
        b.iter(|| amplitude_envelope(black_box(wav), 25.0, 100, &CONDITIONING_ENVELOPE).unwrap())
    });
    let beats = audio_beats(wav, 25.0, &BeatDetectorConfig::default()).unwrap();
    let rig = rig(2000);
    let mask = RegionMask::for_synthetic_rig(&rig);
    let (pred, gt) = (mesh_frames(&rig, 100, 0), mesh_frames(&rig, 100, 7));
    let pose = Array2::from_shape_fn((100, 3), |(i, j)| ((i * (j + 1)) as f64 * 0.3).sin() * 0.1);
    let input = EvalInput {
        pred: &pred,
        gt: &gt,
        pred_head_pose: &pose,
        mask: &mask,
        audio_beats: &beats,
        fps: 25.0,
    };
    let config = MetricsConfig::default();
    c.bench_function("evaluate_100f_2000v", |b| {
        b.iter(|| evaluate(black_box(&input), &config).unwrap())
    });
}

criterion_group!(benches, decoding, model, audio_and_metrics);
criterion_main!(benches);
