//! End-to-end acceptance criteria. Every test prints one PASS/FAIL line to
//! the real stdout so the summary survives output capture.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use oscnet::activation::Activation;
use oscnet::gradcheck::grad_check;
use oscnet::layers::{LayerSpec, Network};
use oscnet::oscillator::{unroll_forward, HopfDynamics, HopfLayerConfig, InputMode};
use oscnet::resonance::{grid, resonance_sweep, SweepConfig};
use oscnet::tasks::{apply_filter, design_butterworth_bandpass, TaskSample};
use oscnet::tensor::ComplexTensor;
use oscnet_cli::commands::{self, TrainOutcome};
use oscnet_cli::ExperimentConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n:>2} {verdict} {name}: {detail}");
    let _ = out.flush();
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn shipped_configs() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(config_path(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

fn train_seed(config: &str, seed: u64, dir: &Path) -> TrainOutcome {
    let mut cfg = ExperimentConfig::load(&config_path(config)).unwrap();
    let out = dir.join(format!("seed{seed}"));
    cfg.apply_overrides(Some(seed), Some(&out), None);
    commands::train(&cfg, None, None).unwrap()
}

fn train_seeds(config: &str, seeds: &[u64]) -> (Vec<TrainOutcome>, f64, f64) {
    let dir = TempDir::new().unwrap();
    let start = Instant::now();
    let runs: Vec<TrainOutcome> = seeds.iter().map(|&s| train_seed(config, s, dir.path())).collect();
    let losses: Vec<f64> = runs.iter().map(|r| r.final_val_loss().unwrap()).collect();
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    (runs, mean, start.elapsed().as_secs_f64())
}

fn losses(runs: &[TrainOutcome]) -> String {
    runs.iter()
        .map(|r| format!("{:.4}", r.final_val_loss().unwrap()))
        .collect::<Vec<_>>()
        .join(", ")
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], complex: bool) -> ComplexTensor {
    let n: usize = shape.iter().product();
    let re = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let im = (0..n)
        .map(|_| if complex { rng.random_range(-1.0..1.0) } else { 0.0 })
        .collect();
    ComplexTensor::from_parts(shape, re, im).unwrap()
}

fn hopf(width: usize, mode: InputMode) -> HopfLayerConfig {
    let mut cfg = HopfLayerConfig::new(width, mode, [1.0, 5.0], 0.01);
    cfg.trainable_freq = true;
    cfg.substeps = 2;
    cfg
}

#[test]
fn c01_gradient_correctness() {
    let start = Instant::now();
    let dense = |w, a| LayerSpec::Dense { width: w, activation: a };
    let kinds: Vec<(&str, Vec<usize>, Vec<LayerSpec>)> = vec![
        (
            "dense",
            vec![3],
            vec![dense(5, Activation::Tanh), dense(2, Activation::Identity)],
        ),
        (
            "hopf resonator",
            vec![2],
            vec![dense(4, Activation::Tanh), LayerSpec::Hopf(hopf(4, InputMode::Resonator)), dense(2, Activation::Identity)],
        ),
        (
            "hopf am",
            vec![2],
            vec![dense(4, Activation::Relu), LayerSpec::Hopf(hopf(4, InputMode::AmplitudeMod)), dense(2, Activation::Identity)],
        ),
        (
            "hopf fm",
            vec![2],
            vec![dense(4, Activation::Tanh), LayerSpec::Hopf(hopf(4, InputMode::FrequencyMod)), dense(2, Activation::Identity)],
        ),
        (
            "ocnn",
            vec![4, 4, 1],
            vec![
                LayerSpec::Ocnn {
                    filters: 2,
                    kernel: 3,
                    activation: Activation::Tanh,
                    oscillator: hopf(0, InputMode::Resonator),
                },
                LayerSpec::Conv {
                    filters: 1,
                    kernel: 3,
                    activation: Activation::Identity,
                },
            ],
        ),
    ];
    let steps = 12;
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (name, input_shape, specs) in &kinds {
        for seed in 0..5u64 {
            let net = Network::build(input_shape, specs, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let mut xs = input_shape.clone();
            xs.push(steps);
            let mut ts = net.output_shape.clone();
            ts.push(steps);
            let x = random_tensor(&mut rng, &xs, true);
            let target = random_tensor(&mut rng, &ts, false);
            let r = grad_check(&net, &x, &target, 1e-6, 1e-3).unwrap();
            worst = worst.max(r.max_rel_error);
            if !r.passed {
                failures.push(format!("{name} seed {seed}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 60.0;
    report(
        1,
        "gradient correctness",
        pass,
        &format!("5 layer kinds x 5 seeds, max rel err {worst:.2e}, {secs:.1}s {failures:?}"),
    );
    assert!(pass);
}

#[test]
fn c02_oscillator_physics() {
    let start = Instant::now();
    let mut radius_err = 0.0f64;
    for mode in [InputMode::Resonator, InputMode::AmplitudeMod, InputMode::FrequencyMod] {
        let p = HopfDynamics { mu: 1.0, beta: -4.0, kappa: 1.0, dt: 1e-3 };
        let zero = ComplexTensor::zeros(&[1, 20_000]);
        let (out, _) = unroll_forward(mode, p, 1, 0.05, &[2.0], &[0.0], &zero).unwrap();
        radius_err = radius_err.max((out.get(out.len() - 1).norm() - 0.5).abs());
    }

    let step = 0.5;
    let pts = resonance_sweep(&SweepConfig {
        omega_diffs: grid(-6.0, 6.0, 25),
        steps: 60_000,
        ..SweepConfig::default()
    });
    let peak = pts.iter().max_by(|a, b| a.amplitude.total_cmp(&b.amplitude)).unwrap();
    let centre = pts.iter().find(|p| p.omega_diff == 0.0).unwrap();
    let edges_slip = pts[0].slipping && pts[pts.len() - 1].slipping;
    let band: Vec<f64> = pts.iter().filter(|p| p.locked).map(|p| p.omega_diff).collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = radius_err < 1e-3
        && peak.omega_diff.abs() <= step
        && centre.locked
        && centre.psi_drift.abs() < 0.1
        && edges_slip
        && secs < 120.0;
    report(
        2,
        "oscillator physics",
        pass,
        &format!(
            "radius err {radius_err:.1e}, peak at {}, locked band [{}, {}], edge drift {:.1}/{:.1} rad, {secs:.1}s",
            peak.omega_diff,
            band.first().copied().unwrap_or(f64::NAN),
            band.last().copied().unwrap_or(f64::NAN),
            pts[0].psi_drift,
            pts[pts.len() - 1].psi_drift
        ),
    );
    assert!(pass);
}

fn euler_run(mode: InputMode, substeps: usize) -> ComplexTensor {
    let (sample_dt, steps) = (0.01, 100);
    let p = HopfDynamics { mu: 1.0, beta: -1.0, kappa: 1.0, dt: sample_dt / substeps as f64 };
    let mut re = Vec::new();
    let mut im = Vec::new();
    for u in 0..2 {
        for k in 0..steps {
            let t = k as f64 * sample_dt;
            re.push((0.5 + 0.2 * u as f64) * (2.0 * t).sin());
            im.push(0.3 * (3.0 * t + u as f64).cos());
        }
    }
    let input = ComplexTensor::from_parts(&[2, steps], re, im).unwrap();
    unroll_forward(mode, p, substeps, 0.2, &[6.0, 9.0], &[0.3, 2.0], &input).unwrap().0
}

#[test]
fn c03_euler_convergence() {
    let err = |a: &ComplexTensor, b: &ComplexTensor| {
        (0..a.len()).map(|i| (a.get(i) - b.get(i)).norm()).fold(0.0, f64::max)
    };
    let mut ratios = Vec::new();
    for mode in [InputMode::Resonator, InputMode::AmplitudeMod, InputMode::FrequencyMod] {
        let reference = euler_run(mode, 100);
        ratios.push(err(&euler_run(mode, 1), &reference) / err(&euler_run(mode, 2), &reference));
    }
    let pass = ratios.iter().all(|r| (1.6..=2.4).contains(r));
    report(3, "euler convergence", pass, &format!("error ratios {ratios:.3?}"));
    assert!(pass);
}

#[test]
fn c04_butterworth_oracle() {
    let fs = 1000.0;
    let h = design_butterworth_bandpass(4, 50.0, 100.0, fs).unwrap();
    let lo = h.magnitude(50.0, fs);
    let hi = h.magnitude(100.0, fs);
    let centre = h.magnitude((50.0f64 * 100.0).sqrt(), fs);
    let n = 10 * fs as usize;
    let mut x = vec![0.0; n];
    x[0] = 1.0;
    let y = apply_filter(&h, &x);
    let mut worst = 0.0f64;
    for k in 0..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in y.iter().enumerate() {
            let a = -2.0 * PI * (k * i % n) as f64 / n as f64;
            re += v * a.cos();
            im += v * a.sin();
        }
        let f = k as f64 * fs / n as f64;
        worst = worst.max(((re * re + im * im).sqrt() - h.magnitude(f, fs)).abs());
    }
    let pass = (lo - FRAC_1_SQRT_2).abs() < 1e-3
        && (hi - FRAC_1_SQRT_2).abs() < 1e-3
        && (centre - 1.0).abs() < 1e-2
        && worst < 1e-6;
    report(
        4,
        "butterworth oracle",
        pass,
        &format!("|H| 50 Hz {lo:.5}, 100 Hz {hi:.5}, centre {centre:.5}, spectrum err {worst:.1e}"),
    );
    assert!(pass);
}

#[test]
fn c05_signal_generation() {
    let (runs, mean, secs) = train_seeds("signal_generation.toml", &[0, 1, 2]);
    let pass = mean <= 0.02;
    report(
        5,
        "signal generation",
        pass,
        &format!("val MSE [{}] mean {mean:.4} (<= 0.02), {secs:.0}s", losses(&runs)),
    );
    assert!(pass);
}

#[test]
fn c06_am_demodulation() {
    let (runs, mean, secs) = train_seeds("am_demodulation.toml", &[0, 1, 2]);
    let pass = mean <= 0.04;
    report(
        6,
        "amplitude demodulation",
        pass,
        &format!("val MSE [{}] mean {mean:.4} (<= 0.04), {secs:.0}s", losses(&runs)),
    );
    assert!(pass);
}

/// RMS of the network output over the second half of a unit sinusoid.
fn probe_rms(net: &Network, f: f64, fs: f64, steps: usize) -> f64 {
    let re: Vec<f64> = (0..steps).map(|k| (2.0 * PI * f * k as f64 / fs).sin()).collect();
    let sample = TaskSample {
        input: ComplexTensor::from_real(&[1, steps], re).unwrap(),
        target: ComplexTensor::zeros(&[1, steps]),
        label: None,
        dt: 1.0 / fs,
        meta: Default::default(),
    };
    let y = commands::predict(net, &sample).unwrap();
    let tail = &y.re()[steps / 2..];
    (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt()
}

#[test]
fn c07_band_pass_learning() {
    let (runs, mean, secs) = train_seeds("filtering.toml", &[0, 1, 2]);
    let ratios: Vec<f64> = runs
        .iter()
        .map(|r| {
            let fs = 1.0 / r.dataset.dt;
            let steps = r.dataset.samples[0].steps();
            probe_rms(&r.network, 75.0, fs, steps) / probe_rms(&r.network, 5.0, fs, steps)
        })
        .collect();
    let pass = mean <= 0.01 && ratios.iter().all(|&r| r > 5.0);
    report(
        7,
        "band-pass filter learning",
        pass,
        &format!(
            "val MSE [{}] mean {mean:.4} (<= 0.01), 75/5 Hz gain ratios {ratios:.1?} (> 5), {secs:.0}s",
            losses(&runs)
        ),
    );
    assert!(pass);
}

#[test]
fn c08_operators() {
    let (int_runs, int_mean, int_secs) = train_seeds("integrate.toml", &[0, 1, 2]);
    let (diff_runs, diff_mean, diff_secs) = train_seeds("differentiate.toml", &[0, 1, 2]);
    let (traj_runs, traj_mean, traj_secs) = train_seeds("trajectory.toml", &[0, 1, 2]);

    let (mut outside, mut total, mut worst_start) = (0usize, 0usize, 0.0f64);
    for run in &traj_runs {
        for s in run.validation() {
            let y = commands::predict(&run.network, s).unwrap();
            let steps = s.steps();
            for ch in 0..2 {
                let row = &y.re()[ch * steps..(ch + 1) * steps];
                worst_start = worst_start.max((row[0] - s.target.re()[ch * steps]).abs());
                outside += row.iter().filter(|v| v.abs() > 1.0).count();
                total += steps;
            }
        }
    }
    let pass = int_mean <= 0.15 && diff_mean <= 0.2 && traj_mean <= 0.15 && outside == 0 && worst_start <= 0.1;
    report(
        8,
        "operators",
        pass,
        &format!(
            "integrate [{}] mean {int_mean:.4} (<= 0.15); differentiate [{}] mean {diff_mean:.4} (<= 0.2); \
             trajectory [{}] mean {traj_mean:.4} (<= 0.15), {outside}/{total} points outside box, \
             worst start offset {worst_start:.3} (<= 0.1); {:.0}s",
            losses(&int_runs),
            losses(&diff_runs),
            losses(&traj_runs),
            int_secs + diff_secs + traj_secs
        ),
    );
    assert!(pass);
}

/// Fraction of predicted frames whose brightest pixel lies within 2 px of a
/// pixel of the true square.
fn localization(run: &TrainOutcome) -> f64 {
    let (mut hits, mut frames) = (0usize, 0usize);
    for s in run.validation() {
        let y = commands::predict(&run.network, s).unwrap();
        let shape = s.target.shape();
        let (h, w, c, t) = (shape[0], shape[1], shape[2], shape[3]);
        let at = |data: &[f64], r: usize, col: usize, k: usize| data[((r * w + col) * c) * t + k];
        for k in 0..t {
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for r in 0..h {
                for col in 0..w {
                    let v = at(y.re(), r, col, k);
                    if v > best.0 {
                        best = (v, r, col);
                    }
                }
            }
            let mut nearest = f64::INFINITY;
            for r in 0..h {
                for col in 0..w {
                    if at(s.target.re(), r, col, k) > 0.5 {
                        let d = ((r as f64 - best.1 as f64).powi(2) + (col as f64 - best.2 as f64).powi(2)).sqrt();
                        nearest = nearest.min(d);
                    }
                }
            }
            hits += usize::from(nearest <= 2.0);
            frames += 1;
        }
    }
    hits as f64 / frames as f64
}

/// The slowest criterion: two seeds of the video network.
#[test]
fn c09_video_frame_prediction() {
    let (runs, mean, secs) = train_seeds("moving_squares.toml", &[0, 1]);
    let loc: Vec<f64> = runs.iter().map(localization).collect();
    let pass = mean <= 0.08 && loc.iter().all(|&l| l >= 0.8) && secs < 7200.0;
    report(
        9,
        "video frame prediction",
        pass,
        &format!(
            "val MSE [{}] mean {mean:.4} (<= 0.08), localized {loc:.3?} (>= 0.8), {secs:.0}s",
            losses(&runs)
        ),
    );
    assert!(pass);
}

#[test]
fn c10_determinism() {
    let dir = TempDir::new().unwrap();
    let mut differing = Vec::new();
    let configs = shipped_configs();
    for path in &configs {
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let mut cfg = ExperimentConfig::load(path).unwrap();
            let out = dir.path().join(format!("{name}-{rep}"));
            cfg.apply_overrides(None, Some(&out), Some(2));
            commands::train(&cfg, None, None).unwrap();
            bytes.push(fs::read(out.join(commands::METRICS_FILE)).unwrap());
        }
        if bytes[0] != bytes[1] || bytes[0].is_empty() {
            differing.push(name);
        }
    }
    let pass = differing.is_empty() && configs.len() >= 7;
    report(
        10,
        "determinism",
        pass,
        &format!("{} shipped configs rerun for 2 epochs, differing: {differing:?}", configs.len()),
    );
    assert!(pass);
}
