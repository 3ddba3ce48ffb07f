//! Velocity to position integration for an agent in the box `[-1, 1]²`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{apply_filter, design_butterworth_bandpass, real_sequence, sample_rng, steps_for, Dataset, TaskKind, TaskSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryOptions {
    pub duration: f64,
    pub dt: f64,
    /// Pass band of the velocity noise, Hz.
    pub band: [f64; 2],
    /// Peak displacement of the unreflected path is drawn from this range.
    pub excursion: [f64; 2],
    /// Noise samples discarded while the filter settles.
    pub burn_in: usize,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            duration: 2.0,
            dt: 0.01,
            band: [0.1, 2.0],
            excursion: [0.3, 0.6],
            burn_in: 500,
        }
    }
}

pub fn gen_trajectory_dataset(seed: u64, n_samples: usize) -> Dataset {
    gen_trajectory_dataset_with(seed, n_samples, &TrajectoryOptions::default())
}

/// Integrates one velocity axis from `start`, reflecting off the walls at
/// ±1. A step that would leave the box flips the sign of that and all later
/// velocities. Returns the realised velocity and the positions, with
/// `x[t+1] = x[t] + v[t]·dt`.
pub fn integrate_reflecting(start: f64, velocity: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let mut v = velocity.to_vec();
    let mut x = Vec::with_capacity(v.len());
    let mut pos = start.clamp(-1.0, 1.0);
    let mut sign = 1.0;
    for (t, vt) in v.iter_mut().enumerate() {
        x.push(pos);
        *vt *= sign;
        if t + 1 == velocity.len() {
            break;
        }
        let mut next = pos + *vt * dt;
        if next.abs() > 1.0 {
            sign = -sign;
            *vt = -*vt;
            next = pos + *vt * dt;
            if next.abs() > 1.0 {
                *vt = 0.0;
                next = pos;
            }
        }
        pos = next;
    }
    (v, x)
}

/// Input `[2, T]` velocities `(ẋ, ẏ)`, target `[2, T]` positions starting at
/// the origin.
pub fn gen_trajectory_dataset_with(seed: u64, n_samples: usize, opts: &TrajectoryOptions) -> Dataset {
    let steps = steps_for(opts.duration, opts.dt);
    let fs = 1.0 / opts.dt;
    let filter = design_butterworth_bandpass(2, opts.band[0], opts.band[1], fs)
        .expect("trajectory band lies below Nyquist");
    let samples = (0..n_samples)
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let mut vel = Vec::with_capacity(2 * steps);
            let mut pos = Vec::with_capacity(2 * steps);
            let mut scales = Vec::with_capacity(2);
            for _ in 0..2 {
                let noise: Vec<f64> = (0..opts.burn_in + steps)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                let raw = apply_filter(&filter, &noise)[opts.burn_in..].to_vec();
                let mut acc = 0.0;
                let mut peak = 0.0f64;
                for v in &raw[..steps - 1] {
                    acc += v * opts.dt;
                    peak = peak.max(acc.abs());
                }
                let want = rng.random_range(opts.excursion[0]..opts.excursion[1]);
                let scale = if peak > 0.0 { want / peak } else { 0.0 };
                let scaled: Vec<f64> = raw.iter().map(|v| v * scale).collect();
                let (v, x) = integrate_reflecting(0.0, &scaled, opts.dt);
                vel.extend(v);
                pos.extend(x);
                scales.push(scale);
            }
            TaskSample {
                input: real_sequence(2, vel),
                target: real_sequence(2, pos),
                label: None,
                dt: opts.dt,
                meta: BTreeMap::from([("start".into(), vec![0.0, 0.0]), ("velocity_scale".into(), scales)]),
            }
        })
        .collect();
    Dataset {
        task: TaskKind::Trajectory,
        dt: opts.dt,
        samples,
        meta: BTreeMap::from([
            ("band_hz".into(), opts.band.to_vec()),
            ("box".into(), vec![-1.0, 1.0]),
            ("duration".into(), vec![opts.duration]),
        ]),
    }
}
