use std::f64::consts::PI;

use oscnet::tasks::{
    gen_am_demodulation, gen_am_demodulation_with, gen_moving_squares, gen_moving_squares_with,
    gen_operator_dataset, gen_signal_generation, gen_trajectory_dataset, generate, integrate_reflecting,
    operator_signals, AmOptions, OperatorKind, SquareMotion, TaskKind, VideoOptions,
};
use proptest::prelude::*;

#[test]
fn signal_generation_labels_and_targets() {
    let ds = gen_signal_generation(0);
    assert_eq!(ds.len(), 20);
    for s in &ds.samples {
        assert_eq!(s.input.shape(), &[4, 100]);
        assert_eq!(s.target.shape(), &[1, 100]);
        let class = s.meta["class"][0] as usize;
        let f = [1.0, 5.0, 7.0, 9.0][class];
        for row in 0..4 {
            let want = if row == class { 1.0 } else { 0.0 };
            assert!(s.input.re()[row * 100..(row + 1) * 100].iter().all(|&v| v == want));
        }
        assert_eq!(s.target.re()[0], 0.0);
        for (k, &y) in s.target.re().iter().enumerate() {
            assert!((y - (2.0 * PI * f * k as f64 * 0.01).sin()).abs() < 1e-12);
        }
    }
}

#[test]
fn am_matches_pointwise_recomputation() {
    let ds = gen_am_demodulation(11, 20);
    for s in &ds.samples {
        let freqs = &s.meta["frequencies_hz"];
        assert_eq!(freqs.len(), 5);
        assert!(freqs.iter().all(|f| (1.0..5.0).contains(f)));
        for k in 0..s.steps() {
            let t = k as f64 * s.dt;
            let m: f64 = freqs.iter().map(|f| (2.0 * PI * f * t).sin()).sum();
            let big_m = (1.0 + m) * (2.0 * PI * 8.0 * t).sin();
            assert!((s.target.re()[k] - m).abs() < 1e-12);
            assert!((s.input.re()[k] - big_m).abs() < 1e-12);
        }
    }
}

#[test]
fn silent_message_leaves_bare_carrier() {
    let opts = AmOptions {
        components: 0,
        ..AmOptions::default()
    };
    let s = &gen_am_demodulation_with(1, 1, &opts).samples[0];
    for k in 0..s.steps() {
        let t = k as f64 * s.dt;
        assert!((s.input.re()[k] - (2.0 * PI * 8.0 * t).sin()).abs() < 1e-12);
    }
}

#[test]
fn operator_examples() {
    let dt = 0.01;
    let (x, y) = operator_signals(OperatorKind::Integrate, &[1.0], &[2.0], &[0.0], 100, dt);
    let (_, d) = operator_signals(OperatorKind::Differentiate, &[1.0], &[2.0], &[0.0], 100, dt);
    for k in 0..100 {
        let t = k as f64 * dt;
        assert!((x[k] - (2.0 * t).sin()).abs() < 1e-12);
        assert!((y[k] + (2.0 * t).cos() / 2.0).abs() < 1e-12);
        assert!((d[k] - 2.0 * (2.0 * t).cos()).abs() < 1e-12);
    }
}

#[test]
fn operator_targets_agree_with_finite_differences() {
    for kind in [OperatorKind::Integrate, OperatorKind::Differentiate] {
        let ds = gen_operator_dataset(kind, 5, 20);
        for s in &ds.samples {
            let (x, y, dt) = (s.input.re(), s.target.re(), s.dt);
            // Amplitudes are standard normal and ω ≤ 5, so second derivatives
            // are bounded by Σ|a|ω² and the central difference error by dt²/6 of the third.
            let a: f64 = s.meta["amplitudes"].iter().map(|v| v.abs()).sum();
            let tol = a * 125.0 * dt * dt;
            for k in 1..x.len() - 1 {
                let (num, want) = match kind {
                    OperatorKind::Integrate => ((y[k + 1] - y[k - 1]) / (2.0 * dt), x[k]),
                    OperatorKind::Differentiate => ((x[k + 1] - x[k - 1]) / (2.0 * dt), y[k]),
                };
                assert!((num - want).abs() <= tol, "{kind:?} k={k}: {num} vs {want}");
            }
            let omegas = &s.meta["omegas"];
            assert!(omegas.iter().all(|w| (1.0..5.0).contains(w)));
        }
    }
}

#[test]
fn trajectory_is_consistent_and_bounded() {
    let ds = gen_trajectory_dataset(2, 30);
    for s in &ds.samples {
        let t = s.steps();
        assert_eq!(s.input.shape(), &[2, t]);
        for axis in 0..2 {
            let v = &s.input.re()[axis * t..(axis + 1) * t];
            let x = &s.target.re()[axis * t..(axis + 1) * t];
            assert_eq!(x[0], 0.0);
            for k in 0..t - 1 {
                assert_eq!(x[k + 1], x[k] + v[k] * s.dt);
            }
            assert!(x.iter().all(|p| p.abs() <= 1.0));
            assert!(v.iter().any(|&a| a != 0.0));
        }
    }
}

proptest! {
    #[test]
    fn reflection_keeps_positions_in_box(
        start in -1.0f64..1.0,
        v in prop::collection::vec(-50.0f64..50.0, 1..100),
    ) {
        let (vr, x) = integrate_reflecting(start, &v, 0.01);
        prop_assert_eq!(x.len(), v.len());
        prop_assert!(x.iter().all(|p| p.abs() <= 1.0));
        for k in 0..x.len() - 1 {
            prop_assert_eq!(x[k + 1], x[k] + vr[k] * 0.01);
            prop_assert!(vr[k].abs() == v[k].abs() || vr[k] == 0.0);
        }
    }
}

/// Rasterises the square at frame `t` directly from its motion parameters.
fn reference_frame(side: usize, start: &[f64], velocity: &[f64], t: usize, size: usize) -> Vec<f64> {
    let top = (start[0] + velocity[0] * t as f64).round();
    let left = (start[1] + velocity[1] * t as f64).round();
    let mut img = vec![0.0; size * size];
    for (i, px) in img.iter_mut().enumerate() {
        let (r, c) = ((i / size) as f64, (i % size) as f64);
        if r >= top && r < top + side as f64 && c >= left && c < left + side as f64 {
            *px = 1.0;
        }
    }
    img
}

fn frame(video: &oscnet::ComplexTensor, t: usize) -> Vec<f64> {
    let frames = video.shape()[3];
    let pixels = video.len() / frames;
    (0..pixels).map(|p| video.re()[p * frames + t]).collect()
}

#[test]
fn squares_match_independent_rasteriser() {
    let ds = gen_moving_squares(4, 25);
    for s in &ds.samples {
        assert_eq!(s.input.shape(), &[40, 40, 1, 15]);
        assert_eq!(s.target.shape(), &[40, 40, 1, 15]);
        let side = s.meta["side"][0] as usize;
        assert!((2..=4).contains(&side));
        let speed = s.meta["speed"][0];
        assert!((0.5..=1.5).contains(&speed));
        let (start, vel) = (&s.meta["start"], &s.meta["velocity"]);
        assert!((vel[0].hypot(vel[1]) - speed).abs() < 1e-12);
        for t in 0..15 {
            assert_eq!(frame(&s.input, t), reference_frame(side, start, vel, t, 40));
            assert_eq!(frame(&s.target, t), reference_frame(side, start, vel, t + 1, 40));
            let lit: f64 = frame(&s.input, t).iter().sum();
            assert_eq!(lit, (side * side) as f64);
        }
    }
}

#[test]
fn clipped_square_loses_pixels() {
    let m = SquareMotion {
        side: 4,
        start: [-2.0, 38.0],
        velocity: [0.0, 0.0],
    };
    let v = oscnet::tasks::render_video(&m, 40, 1);
    assert_eq!(frame(&v, 0), reference_frame(4, &[-2.0, 38.0], &[0.0, 0.0], 0, 40));
    assert_eq!(v.re().iter().sum::<f64>(), 4.0);
}

#[test]
fn still_square_targets_equal_inputs() {
    let opts = VideoOptions {
        speed_range: [0.0, 0.0],
        ..VideoOptions::default()
    };
    for s in &gen_moving_squares_with(9, 5, &opts).samples {
        assert_eq!(s.input, s.target);
    }
}

#[test]
fn generators_are_deterministic_and_finite() {
    for task in TaskKind::ALL {
        let n = if task == TaskKind::MovingSquares { 3 } else { 6 };
        let a = generate(task, 42, n);
        let b = generate(task, 42, n);
        assert_eq!(a, b, "{task}");
        assert!(a.is_finite(), "{task}");
        for s in &a.samples {
            assert_eq!(s.input.shape().last(), s.target.shape().last());
            assert!(s.target.im().iter().all(|&v| v == 0.0));
        }
        if task != TaskKind::MovingSquares {
            let want = a.meta["duration"][0];
            for s in &a.samples {
                assert!((s.duration() - want).abs() < 1e-9, "{task}: {} vs {want}", s.duration());
            }
        }
        if task != TaskKind::SignalGeneration {
            assert_ne!(generate(task, 43, n), a, "{task}");
        }
    }
}

#[test]
fn sample_streams_do_not_depend_on_count() {
    let small = gen_am_demodulation(7, 3);
    let large = gen_am_demodulation(7, 10);
    assert_eq!(small.samples[..], large.samples[..3]);
}

#[test]
fn task_names_round_trip() {
    for task in TaskKind::ALL {
        assert_eq!(task.name().parse::<TaskKind>().unwrap(), task);
    }
    let err = "bogus".parse::<TaskKind>().unwrap_err().to_string();
    assert!(err.contains("signal-generation") && err.contains("moving-squares"), "{err}");
}
