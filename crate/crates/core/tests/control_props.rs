use ndarray::{Array1, Array2};
use proptest::prelude::*;
use talkhead_core::control::{
    apply_emotion_schedule, gen_trajectory, scale_emotion, schedule_emotions, superimpose, EmotionLabel,
    EmotionSegment, EmotionTemplate, PoseAxis, TemplateSet, TrajectoryKind, TrajectorySpec, TransitionSchedule,
};
use talkhead_core::flame::{ParamSequence, StateLayout};

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

fn kind_strategy() -> impl Strategy<Value = TrajectoryKind> {
    prop_oneof![
        Just(TrajectoryKind::Still),
        Just(TrajectoryKind::Sway),
        Just(TrajectoryKind::Nod),
        Just(TrajectoryKind::Arc),
        Just(TrajectoryKind::Rotate),
    ]
}

fn axis_strategy() -> impl Strategy<Value = PoseAxis> {
    prop_oneof![Just(PoseAxis::Pitch), Just(PoseAxis::Yaw), Just(PoseAxis::Roll)]
}

proptest! {
    #[test]
    fn emotion_scaling_is_affine_in_lambda(
        r in vec_strategy(6), p in vec_strategy(6),
        l1 in 0.0f64..1.0, l2 in 0.0f64..1.0, alpha in 1.0f64..2.0,
    ) {
        let t = EmotionTemplate::new(EmotionLabel::Sad, Array1::from(p.clone())).unwrap();
        let r = Array1::from(r);
        let a = scale_emotion(r.view(), &t, l1, alpha).unwrap();
        let b = scale_emotion(r.view(), &t, l2, alpha).unwrap();
        let mid = scale_emotion(r.view(), &t, 0.5 * (l1 + l2), alpha).unwrap();
        for i in 0..6 {
            prop_assert!((mid[i] - 0.5 * (a[i] + b[i])).abs() < 1e-12);
            let direct = (1.0 - l1) * r[i] + l1 * alpha * p[i];
            prop_assert!((a[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_outside_unit_interval_is_rejected(r in vec_strategy(3), l in prop_oneof![-5.0f64..-1e-6, 1.000001f64..5.0]) {
        let t = EmotionTemplate::new(EmotionLabel::Happy, Array1::zeros(3)).unwrap();
        prop_assert!(scale_emotion(Array1::from(r).view(), &t, l, 1.0).is_err());
    }

    #[test]
    fn trajectory_respects_clamp(
        kind in kind_strategy(), axis in axis_strategy(),
        amplitude in 0.0f64..2.0, period in 0.2f64..4.0, phase in -3.0f64..3.0, clamp in 0.0f64..0.5,
        n in 1usize..80,
    ) {
        let spec = TrajectorySpec { kind, axis, amplitude, period, phase, clamp: [clamp; 3] };
        let t = gen_trajectory(&spec, n, 25.0).unwrap();
        prop_assert_eq!(t.dim(), (n, 3));
        for i in 0..n {
            for c in 0..3 {
                prop_assert!(t[[i, c]].abs() <= clamp + 1e-15);
                if c != axis.column() {
                    prop_assert_eq!(t[[i, c]], 0.0);
                }
            }
        }
    }

    #[test]
    fn trajectory_steps_are_bounded_by_its_slope(
        kind in kind_strategy(), amplitude in 0.0f64..1.0, period in 0.5f64..4.0, n in 2usize..60,
    ) {
        let fps = 25.0;
        let spec = TrajectorySpec { amplitude, period, clamp: [10.0; 3], ..TrajectorySpec::preset(kind) };
        let t = gen_trajectory(&spec, n, fps).unwrap();
        let col = spec.axis.column();
        // sinusoids and the raised cosine peak at amplitude*pi/period per second (2pi for sin)
        let slope = std::f64::consts::TAU * amplitude / period;
        for i in 1..n {
            prop_assert!((t[[i, col]] - t[[i - 1, col]]).abs() <= slope / fps + 1e-12);
        }
    }

    #[test]
    fn superimpose_touches_only_head_rotation(seed_rows in prop::collection::vec(vec_strategy(20), 2..6), offs in vec_strategy(18)) {
        let n = seed_rows.len();
        let flat: Vec<f64> = seed_rows.concat();
        let seq = ParamSequence::absolute(Array2::from_shape_vec((n, 20), flat).unwrap(), 25.0, StateLayout::TOY).unwrap();
        let traj = Array2::from_shape_fn((n, 3), |(i, c)| offs[(i * 3 + c) % offs.len()]);
        let out = superimpose(&seq, &traj).unwrap();
        let head = StateLayout::TOY.head_range();
        for i in 0..n {
            for c in 0..20 {
                let expect = if head.contains(&c) { seq.frames()[[i, c]] + traj[[i, c - head.start]] } else { seq.frames()[[i, c]] };
                prop_assert_eq!(out.frames()[[i, c]], expect);
            }
        }
    }

    #[test]
    fn schedule_leaves_uncovered_frames_and_matches_constant_scaling(
        rows in prop::collection::vec(vec_strategy(4), 6..20), bar in vec_strategy(4),
        lambda in 0.0f64..=1.0, cut in 1usize..5,
    ) {
        let n = rows.len();
        let track = Array2::from_shape_vec((n, 4), rows.concat()).unwrap();
        let t = EmotionTemplate::new(EmotionLabel::Fear, Array1::from(bar)).unwrap();
        let mut set = TemplateSet::new();
        set.insert(t.clone()).unwrap();
        let schedule = TransitionSchedule {
            segments: vec![EmotionSegment { label: EmotionLabel::Fear, start: cut, end: n, lambda, alpha: 1.2 }],
            blend_frames: 4,
        };
        let out = schedule_emotions(&schedule, &set, &track).unwrap();
        for i in 0..n {
            if i < cut {
                prop_assert_eq!(out.row(i), track.row(i));
            } else {
                let expect = scale_emotion(track.row(i), &t, lambda, 1.2).unwrap();
                for c in 0..4 {
                    prop_assert!((out[[i, c]] - expect[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn crossfade_stays_between_neighbouring_segments(rows in prop::collection::vec(vec_strategy(3), 12..24), blend in 0usize..8) {
        let n = rows.len();
        let track = Array2::from_shape_vec((n, 3), rows.concat()).unwrap();
        let mut set = TemplateSet::new();
        let (a, b) = (Array1::from(vec![1.0, -1.0, 0.5]), Array1::from(vec![-2.0, 0.0, 2.0]));
        set.insert(EmotionTemplate::new(EmotionLabel::Happy, a.clone()).unwrap()).unwrap();
        set.insert(EmotionTemplate::new(EmotionLabel::Angry, b.clone()).unwrap()).unwrap();
        let mid = n / 2;
        let seg = |label, start, end| EmotionSegment { label, start, end, lambda: 1.0, alpha: 1.0 };
        let schedule = TransitionSchedule {
            segments: vec![seg(EmotionLabel::Happy, 0, mid), seg(EmotionLabel::Angry, mid, n)],
            blend_frames: blend,
        };
        let out = schedule_emotions(&schedule, &set, &track).unwrap();
        for i in 0..n {
            for c in 0..3 {
                let (lo, hi) = (a[c].min(b[c]), a[c].max(b[c]));
                prop_assert!(out[[i, c]] >= lo - 1e-12 && out[[i, c]] <= hi + 1e-12);
            }
        }
        // far from the boundary each side is its own template
        if mid > blend {
            prop_assert_eq!(out.row(0), a.view());
        }
        if n - mid > blend {
            prop_assert_eq!(out.row(n - 1), b.view());
        }
    }
}

#[test]
fn absolute_schedule_keeps_the_reference_row() {
    let layout = StateLayout::TOY;
    let frames = Array2::from_shape_fn((5, layout.total()), |(i, c)| (i * 31 + c) as f64 * 0.01);
    let seq = ParamSequence::absolute(frames, 25.0, layout).unwrap();
    let mut set = TemplateSet::new();
    set.insert(EmotionTemplate::new(EmotionLabel::Surprise, Array1::ones(layout.psi)).unwrap())
        .unwrap();
    let out = apply_emotion_schedule(
        &seq,
        &TransitionSchedule::constant(EmotionLabel::Surprise, 4, 1.0, 1.0),
        &set,
    )
    .unwrap();
    assert_eq!(out.frames().row(0), seq.frames().row(0));
    for i in 1..5 {
        for c in layout.psi_range() {
            assert_eq!(out.frames()[[i, c]], 1.0);
        }
    }
}
