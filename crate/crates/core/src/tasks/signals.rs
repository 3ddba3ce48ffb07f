//! One-dimensional signal tasks: generation, AM demodulation, band-pass
//! filtering and the integrate/differentiate operators.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    apply_filter, design_butterworth_bandpass, real_sequence, sample_rng, steps_for, Dataset, TaskKind,
    TaskSample,
};

/// Target frequency in Hz for each signal-generation class.
pub const SIGNAL_FREQUENCIES: [f64; 4] = [1.0, 5.0, 7.0, 9.0];

pub const CARRIER_HZ: f64 = 8.0;

fn time_grid(steps: usize, dt: f64) -> impl Iterator<Item = f64> + Clone {
    (0..steps).map(move |k| k as f64 * dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalGenOptions {
    pub duration: f64,
    pub dt: f64,
    /// Copies of each of the four classes. Classes are interleaved so any
    /// contiguous split sees all of them.
    pub repeats: usize,
}

impl Default for SignalGenOptions {
    fn default() -> Self {
        Self {
            duration: 1.0,
            dt: 0.01,
            repeats: 5,
        }
    }
}

pub fn gen_signal_generation(seed: u64) -> Dataset {
    gen_signal_generation_with(seed, &SignalGenOptions::default())
}

/// One-hot class input held constant; target `sin(2π f t)`. The task has no
/// randomness, `seed` is accepted for a uniform generator interface.
pub fn gen_signal_generation_with(_seed: u64, opts: &SignalGenOptions) -> Dataset {
    let steps = steps_for(opts.duration, opts.dt);
    let mut samples = Vec::with_capacity(4 * opts.repeats);
    for _ in 0..opts.repeats {
        for (class, &f) in SIGNAL_FREQUENCIES.iter().enumerate() {
            let mut input = vec![0.0; 4 * steps];
            input[class * steps..(class + 1) * steps].fill(1.0);
            let target: Vec<f64> = time_grid(steps, opts.dt).map(|t| (2.0 * PI * f * t).sin()).collect();
            samples.push(TaskSample {
                input: real_sequence(4, input),
                target: real_sequence(1, target),
                label: None,
                dt: opts.dt,
                meta: BTreeMap::from([
                    ("class".into(), vec![class as f64]),
                    ("frequency_hz".into(), vec![f]),
                ]),
            });
        }
    }
    Dataset {
        task: TaskKind::SignalGeneration,
        dt: opts.dt,
        samples,
        meta: BTreeMap::from([
            ("duration".into(), vec![opts.duration]),
            ("frequencies_hz".into(), SIGNAL_FREQUENCIES.to_vec()),
        ]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmOptions {
    pub duration: f64,
    pub dt: f64,
    pub components: usize,
    pub freq_range: [f64; 2],
    pub carrier_hz: f64,
}

impl Default for AmOptions {
    fn default() -> Self {
        Self {
            duration: 1.0,
            dt: 0.01,
            components: 5,
            freq_range: [1.0, 5.0],
            carrier_hz: CARRIER_HZ,
        }
    }
}

pub fn gen_am_demodulation(seed: u64, n_samples: usize) -> Dataset {
    gen_am_demodulation_with(seed, n_samples, &AmOptions::default())
}

/// Message `m(t) = Σ sin(2π f_i t)`, input `(1 + m(t)) sin(2π f_c t)`,
/// target `m(t)`.
pub fn gen_am_demodulation_with(seed: u64, n_samples: usize, opts: &AmOptions) -> Dataset {
    let steps = steps_for(opts.duration, opts.dt);
    let samples = (0..n_samples)
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let freqs: Vec<f64> = (0..opts.components)
                .map(|_| rng.random_range(opts.freq_range[0]..opts.freq_range[1]))
                .collect();
            let (input, target): (Vec<f64>, Vec<f64>) = time_grid(steps, opts.dt)
                .map(|t| {
                    let m: f64 = freqs.iter().map(|f| (2.0 * PI * f * t).sin()).sum();
                    ((1.0 + m) * (2.0 * PI * opts.carrier_hz * t).sin(), m)
                })
                .unzip();
            TaskSample {
                input: real_sequence(1, input),
                target: real_sequence(1, target),
                label: None,
                dt: opts.dt,
                meta: BTreeMap::from([("frequencies_hz".into(), freqs)]),
            }
        })
        .collect();
    Dataset {
        task: TaskKind::AmDemodulation,
        dt: opts.dt,
        samples,
        meta: BTreeMap::from([
            ("carrier_hz".into(), vec![opts.carrier_hz]),
            ("duration".into(), vec![opts.duration]),
            ("freq_range_hz".into(), opts.freq_range.to_vec()),
        ]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilteringOptions {
    pub fs: f64,
    pub duration: f64,
    pub components: usize,
    pub freq_range: [f64; 2],
    pub amp_range: [f64; 2],
    pub noise_std: f64,
    pub order: usize,
    pub band: [f64; 2],
}

impl Default for FilteringOptions {
    fn default() -> Self {
        Self {
            fs: 1000.0,
            duration: 1.0,
            components: 3,
            freq_range: [5.0, 300.0],
            amp_range: [0.5, 1.5],
            noise_std: 0.1,
            order: 4,
            band: [50.0, 100.0],
        }
    }
}

pub fn gen_filtering_dataset(seed: u64, n_samples: usize) -> Dataset {
    gen_filtering_dataset_with(seed, n_samples, &FilteringOptions::default())
}

/// Noisy multi-sinusoid input; target is the input passed through the
/// Butterworth band-pass. Noise is added before filtering.
pub fn gen_filtering_dataset_with(seed: u64, n_samples: usize, opts: &FilteringOptions) -> Dataset {
    let dt = 1.0 / opts.fs;
    let steps = steps_for(opts.duration, dt);
    let filter = design_butterworth_bandpass(opts.order, opts.band[0], opts.band[1], opts.fs)
        .expect("filtering options carry a valid band");
    let noise = Normal::new(0.0, opts.noise_std).expect("finite noise std");
    let samples = (0..n_samples)
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let mut freqs = Vec::with_capacity(opts.components);
            let mut amps = Vec::with_capacity(opts.components);
            let mut phases = Vec::with_capacity(opts.components);
            for _ in 0..opts.components {
                freqs.push(rng.random_range(opts.freq_range[0]..opts.freq_range[1]));
                amps.push(rng.random_range(opts.amp_range[0]..opts.amp_range[1]));
                phases.push(rng.random_range(0.0..2.0 * PI));
            }
            let input: Vec<f64> = time_grid(steps, dt)
                .map(|t| {
                    let clean: f64 = (0..opts.components)
                        .map(|c| amps[c] * (2.0 * PI * freqs[c] * t + phases[c]).sin())
                        .sum();
                    clean + noise.sample(&mut rng)
                })
                .collect();
            let target = apply_filter(&filter, &input);
            TaskSample {
                input: real_sequence(1, input),
                target: real_sequence(1, target),
                label: None,
                dt,
                meta: BTreeMap::from([
                    ("amplitudes".into(), amps),
                    ("frequencies_hz".into(), freqs),
                    ("phases".into(), phases),
                ]),
            }
        })
        .collect();
    Dataset {
        task: TaskKind::Filtering,
        dt,
        samples,
        meta: BTreeMap::from([
            ("band_hz".into(), opts.band.to_vec()),
            ("duration".into(), vec![opts.duration]),
            ("fs".into(), vec![opts.fs]),
            ("noise_std".into(), vec![opts.noise_std]),
            ("order".into(), vec![opts.order as f64]),
        ]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Integrate,
    Differentiate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorOptions {
    pub duration: f64,
    pub dt: f64,
    pub components: usize,
    /// Angular frequency range in rad/s.
    pub omega_range: [f64; 2],
    /// Standard deviation of the component phases.
    pub phase_std: f64,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        Self {
            duration: 1.0,
            dt: 0.01,
            components: 3,
            omega_range: [1.0, 5.0],
            phase_std: PI,
        }
    }
}

pub fn gen_operator_dataset(kind: OperatorKind, seed: u64, n_samples: usize) -> Dataset {
    gen_operator_dataset_with(kind, seed, n_samples, &OperatorOptions::default())
}

/// Input `Σ a_i sin(ω_i t + φ_i)` with `a ~ N(0,1)`, `φ ~ N(0, phase_std)`,
/// `ω ~ U(omega_range)`. Targets are the analytic antiderivative (zero
/// constant) or derivative.
pub fn gen_operator_dataset_with(
    kind: OperatorKind,
    seed: u64,
    n_samples: usize,
    opts: &OperatorOptions,
) -> Dataset {
    let steps = steps_for(opts.duration, opts.dt);
    let phase_dist = Normal::new(0.0, opts.phase_std).expect("finite phase std");
    let samples = (0..n_samples)
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let mut amps = Vec::with_capacity(opts.components);
            let mut omegas = Vec::with_capacity(opts.components);
            let mut phases = Vec::with_capacity(opts.components);
            for _ in 0..opts.components {
                amps.push(rand_distr::StandardNormal.sample(&mut rng));
                phases.push(phase_dist.sample(&mut rng));
                omegas.push(rng.random_range(opts.omega_range[0]..opts.omega_range[1]));
            }
            let (input, target) = operator_signals(kind, &amps, &omegas, &phases, steps, opts.dt);
            TaskSample {
                input: real_sequence(1, input),
                target: real_sequence(1, target),
                label: None,
                dt: opts.dt,
                meta: BTreeMap::from([
                    ("amplitudes".into(), amps),
                    ("omegas".into(), omegas),
                    ("phases".into(), phases),
                ]),
            }
        })
        .collect();
    Dataset {
        task: match kind {
            OperatorKind::Integrate => TaskKind::Integrate,
            OperatorKind::Differentiate => TaskKind::Differentiate,
        },
        dt: opts.dt,
        samples,
        meta: BTreeMap::from([
            ("duration".into(), vec![opts.duration]),
            ("omega_range".into(), opts.omega_range.to_vec()),
        ]),
    }
}

/// Input and target sequences for explicit components `(a_i, ω_i, φ_i)`.
pub fn operator_signals(
    kind: OperatorKind,
    amps: &[f64],
    omegas: &[f64],
    phases: &[f64],
    steps: usize,
    dt: f64,
) -> (Vec<f64>, Vec<f64>) {
    time_grid(steps, dt)
        .map(|t| {
            let mut x = 0.0;
            let mut y = 0.0;
            for ((&a, &w), &p) in amps.iter().zip(omegas).zip(phases) {
                let arg = w * t + p;
                x += a * arg.sin();
                y += match kind {
                    OperatorKind::Integrate => -(a / w) * arg.cos(),
                    OperatorKind::Differentiate => a * w * arg.cos(),
                };
            }
            (x, y)
        })
        .unzip()
}
