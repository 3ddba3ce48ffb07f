//! Tuning curve of a single forced resonator: steady amplitude and relative
//! phase as a function of the drive/natural frequency difference.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::oscillator::{hopf_step_resonator, HopfDynamics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mu: f64,
    pub beta: f64,
    /// Drive amplitude `F` of `I(t) = F e^{iω_in t}`.
    pub force: f64,
    /// Natural frequency of the oscillator, rad/s.
    pub omega: f64,
    /// Drive minus natural frequency, rad/s, one run per entry.
    pub omega_diffs: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub r_init: f64,
    /// Fraction of the run, at the end, treated as steady state.
    pub tail: f64,
    /// Locked when ψ drifts less than this over the tail (rad).
    pub lock_tolerance: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            beta: -100.0,
            force: 0.2,
            omega: 10.0,
            omega_diffs: grid(-5.0, 5.0, 41),
            dt: 1e-3,
            steps: 100_000,
            r_init: 0.1,
            tail: 0.2,
            lock_tolerance: 0.1,
        }
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub omega_diff: f64,
    /// Mean `|z|` over the tail.
    pub amplitude: f64,
    /// Mean relative phase `ψ = arg z − ω_in t` over the tail, unwrapped.
    pub mean_psi: f64,
    pub psi_std: f64,
    /// `ψ(end) − ψ(tail start)`.
    pub psi_drift: f64,
    pub locked: bool,
    /// Total drift exceeds one full turn.
    pub slipping: bool,
    /// Mean amplitude over the last 5% of the run differs from the
    /// preceding 5% by less than `SETTLE_TOLERANCE`.
    pub settled: bool,
    pub diverged: bool,
}

pub const SETTLE_TOLERANCE: f64 = 1e-4;

/// Simulates one drive frequency.
pub fn drive_response(cfg: &SweepConfig, omega_diff: f64) -> SweepPoint {
    let p = HopfDynamics {
        mu: cfg.mu,
        beta: cfg.beta,
        kappa: 1.0,
        dt: cfg.dt,
    };
    let w_in = cfg.omega + omega_diff;
    let tail_start = ((1.0 - cfg.tail) * cfg.steps as f64) as usize;
    let mut z = [Complex64::new(cfg.r_init, 0.0)];
    let mut psi = 0.0;
    let mut prev_arg = z[0].arg();
    let (mut psi_first, mut n, mut sum_amp, mut sum_psi, mut sum_psi2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut diverged = false;
    // Amplitude sums over the two halves of the final 10%.
    let half = (cfg.steps / 20).max(1);
    let settle_start = cfg.steps.saturating_sub(2 * half);
    let mut window = [0.0; 2];
    for k in 0..cfg.steps {
        let t = k as f64 * cfg.dt;
        let drive = [Complex64::from_polar(cfg.force, w_in * t)];
        if hopf_step_resonator(&mut z, &[cfg.omega], &drive, &p, k).is_err() {
            diverged = true;
            break;
        }
        // Unwrapped phase of z relative to the drive at the new time.
        let arg = z[0].arg();
        let mut d = arg - prev_arg;
        d -= TAU * (d / TAU).round();
        prev_arg = arg;
        psi += d - w_in * cfg.dt;
        if k >= settle_start {
            window[((k - settle_start) / half).min(1)] += z[0].norm();
        }
        if k + 1 >= tail_start {
            if n == 0.0 {
                psi_first = psi;
            }
            n += 1.0;
            sum_amp += z[0].norm();
            sum_psi += psi;
            sum_psi2 += psi * psi;
        }
    }
    if diverged || n == 0.0 {
        return SweepPoint {
            omega_diff,
            amplitude: f64::NAN,
            mean_psi: f64::NAN,
            psi_std: f64::NAN,
            psi_drift: f64::NAN,
            locked: false,
            slipping: false,
            settled: false,
            diverged: true,
        };
    }
    let mean_psi = sum_psi / n;
    let psi_std = (sum_psi2 / n - mean_psi * mean_psi).max(0.0).sqrt();
    let psi_drift = psi - psi_first;
    SweepPoint {
        omega_diff,
        amplitude: sum_amp / n,
        mean_psi,
        psi_std,
        psi_drift,
        locked: psi_drift.abs() < cfg.lock_tolerance,
        slipping: psi_drift.abs() > TAU,
        settled: cfg.steps >= 2 && (window[1] - window[0]).abs() < SETTLE_TOLERANCE * half as f64,
        diverged: false,
    }
}

pub fn resonance_sweep(cfg: &SweepConfig) -> Vec<SweepPoint> {
    cfg.omega_diffs.iter().map(|&d| drive_response(cfg, d)).collect()
}
