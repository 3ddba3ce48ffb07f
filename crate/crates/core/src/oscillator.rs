//! Supercritical Hopf oscillator dynamics and their forward-Euler unrolling.
//!
//! Three input modes are supported:
//!
//! * resonator: `ż = z(μ + iω + β|z|²) + κ·u(t)`, integrated in Cartesian form;
//! * amplitude modulation: `μ(t) = μ₀ + κ·Re u(t)`, `ṙ = μ(t)r + βr³`, `θ̇ = ω`;
//! * frequency modulation: `ṙ = μ₀r + βr³`, `θ̇ = ω + κ·Re u(t)`.
//!
//! The emitted activation is always the complex state `r·e^{iθ}`.
//!
//! Each input sample is held for `substeps` Euler steps of length
//! `dt / substeps`, so fast oscillators can run on slowly sampled signals.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::ComplexTensor;

/// Lower bound for the radius in the polar modes.
pub const R_FLOOR: f64 = 1e-6;
/// Lower bound for the effective bifurcation parameter in amplitude modulation.
pub const MU_FLOOR: f64 = 1e-6;

/// Angular advance per Euler step above which a configuration is rejected.
pub const MAX_PHASE_ADVANCE: f64 = 0.5;
/// Angular advance per Euler step above which a configuration is flagged.
pub const WARN_PHASE_ADVANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Resonator,
    AmplitudeMod,
    FrequencyMod,
}

impl InputMode {
    pub fn name(self) -> &'static str {
        match self {
            InputMode::Resonator => "resonator",
            InputMode::AmplitudeMod => "amplitude_mod",
            InputMode::FrequencyMod => "frequency_mod",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HopfError {
    #[error("invalid oscillator configuration: {0}")]
    Config(String),
    #[error("oscillator {oscillator} diverged at step {step}")]
    Divergence { oscillator: usize, step: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("state/input size mismatch: {state} oscillators, {input} inputs")]
    Size { state: usize, input: usize },
}

fn default_substeps() -> usize {
    1
}

fn default_r_init() -> f64 {
    0.1
}

fn default_kappa() -> f64 {
    1.0
}

/// Per-layer oscillator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfLayerConfig {
    pub width: usize,
    pub mode: InputMode,
    pub mu0: f64,
    pub beta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Natural frequency initialization range in Hz.
    pub omega_init_range: [f64; 2],
    #[serde(default)]
    pub trainable_freq: bool,
    /// Input sample period in seconds.
    pub dt: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_r_init")]
    pub r_init: f64,
    #[serde(default)]
    pub theta_init_seed: u64,
    /// Declared range of `Re(z_in)`; checked against `μ₀ + κ·min Re(z_in) > 0`
    /// for amplitude modulation.
    #[serde(default)]
    pub input_range: Option<[f64; 2]>,
}

impl HopfLayerConfig {
    pub fn new(width: usize, mode: InputMode, omega_init_range: [f64; 2], dt: f64) -> Self {
        Self {
            width,
            mode,
            mu0: 1.0,
            beta: -1.0,
            kappa: 1.0,
            omega_init_range,
            trainable_freq: false,
            dt,
            substeps: 1,
            r_init: 0.1,
            theta_init_seed: 0,
            input_range: None,
        }
    }

    /// Euler step length.
    pub fn step(&self) -> f64 {
        self.dt / self.substeps as f64
    }

    pub fn dynamics(&self) -> HopfDynamics {
        HopfDynamics {
            mu: self.mu0,
            beta: self.beta,
            kappa: self.kappa,
            dt: self.step(),
        }
    }

    /// Largest per-step phase advance implied by the frequency range.
    pub fn phase_advance(&self) -> f64 {
        self.step() * TAU * self.omega_init_range[1].abs()
    }

    pub fn validate(&self) -> Result<(), HopfError> {
        let bad = |msg: String| Err(HopfError::Config(msg));
        if !(self.beta < 0.0 && self.mu0 >= 0.0) {
            return bad(format!(
                "need beta < 0 with mu0 >= 0 (critical/supercritical regime), got mu0={} beta={}",
                self.mu0, self.beta
            ));
        }
        if !(self.dt > 0.0) || self.substeps == 0 {
            return bad(format!("dt must be positive and substeps >= 1, got dt={} substeps={}", self.dt, self.substeps));
        }
        let [lo, hi] = self.omega_init_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!("bad frequency range [{lo}, {hi}]"));
        }
        if self.phase_advance() >= MAX_PHASE_ADVANCE {
            return bad(format!(
                "Euler phase advance {:.3} rad/step exceeds {MAX_PHASE_ADVANCE} (dt={}, substeps={}, f_hi={hi} Hz)",
                self.phase_advance(),
                self.dt,
                self.substeps
            ));
        }
        if !(self.r_init > 0.0) {
            return bad(format!("r_init must be positive, got {}", self.r_init));
        }
        if let (InputMode::AmplitudeMod, Some([a, b])) = (self.mode, self.input_range) {
            let lowest = self.mu0 + (self.kappa * a).min(self.kappa * b);
            if lowest <= 0.0 {
                return bad(format!(
                    "amplitude modulation needs mu0 + kappa*min(Re z_in) > 0; declared input range [{a}, {b}] gives {lowest}"
                ));
            }
        }
        Ok(())
    }

    /// Non-fatal issues worth surfacing to the user.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.phase_advance() > WARN_PHASE_ADVANCE {
            out.push(format!(
                "Euler phase advance {:.3} rad/step is above {WARN_PHASE_ADVANCE}; consider more substeps",
                self.phase_advance()
            ));
        }
        out
    }

    /// Initial phases, uniform on `[0, 2π)`, fixed by `theta_init_seed`.
    pub fn initial_phases(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.theta_init_seed);
        (0..self.width).map(|_| rng.random::<f64>() * TAU).collect()
    }

    pub fn initial_state(&self) -> OscillatorState {
        OscillatorState::initial(self.mode, self.r_init, &self.initial_phases())
    }
}

/// Coefficients of a single Euler step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfDynamics {
    pub mu: f64,
    pub beta: f64,
    pub kappa: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OscillatorState {
    Cartesian(Vec<Complex64>),
    Polar { r: Vec<f64>, theta: Vec<f64> },
}

impl OscillatorState {
    pub fn initial(mode: InputMode, r_init: f64, phases: &[f64]) -> Self {
        match mode {
            InputMode::Resonator => OscillatorState::Cartesian(
                phases.iter().map(|&th| Complex64::from_polar(r_init, th)).collect(),
            ),
            _ => OscillatorState::Polar {
                r: vec![r_init; phases.len()],
                theta: phases.to_vec(),
            },
        }
    }

    pub fn len(&self) -> usize {
        match self {
            OscillatorState::Cartesian(z) => z.len(),
            OscillatorState::Polar { r, .. } => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Complex activation `r cos θ + i r sin θ` per oscillator.
    pub fn output(&self) -> Vec<Complex64> {
        match self {
            OscillatorState::Cartesian(z) => z.clone(),
            OscillatorState::Polar { r, theta } => r
                .iter()
                .zip(theta)
                .map(|(&r, &th)| Complex64::new(r * th.cos(), r * th.sin()))
                .collect(),
        }
    }
}

#[inline]
fn resonator_update(x: f64, y: f64, omega: f64, ur: f64, ui: f64, p: &HopfDynamics) -> (f64, f64) {
    let g = p.mu + p.beta * (x * x + y * y);
    let dx = g * x - omega * y + p.kappa * ur;
    let dy = g * y + omega * x + p.kappa * ui;
    (x + p.dt * dx, y + p.dt * dy)
}

/// Radius update shared by both polar modes; returns the new radius and
/// whether the floor was hit.
#[inline]
fn radius_update(r: f64, mu: f64, beta: f64, dt: f64) -> (f64, bool) {
    let next = r + dt * (mu * r + beta * r * r * r);
    if next < R_FLOOR {
        (R_FLOOR, true)
    } else {
        (next, false)
    }
}

#[inline]
fn modulated_mu(p: &HopfDynamics, input_re: f64) -> (f64, bool) {
    let mu = p.mu + p.kappa * input_re;
    if mu < MU_FLOOR {
        (MU_FLOOR, true)
    } else {
        (mu, false)
    }
}

fn check_sizes(state: usize, omega: &[f64], input: &[Complex64]) -> Result<(), HopfError> {
    if omega.len() != state || input.len() != state {
        return Err(HopfError::Size {
            state,
            input: input.len().min(omega.len()),
        });
    }
    Ok(())
}

/// One Euler step of the forced oscillator in Cartesian form.
pub fn hopf_step_resonator(
    z: &mut [Complex64],
    omega: &[f64],
    input: &[Complex64],
    p: &HopfDynamics,
    step: usize,
) -> Result<(), HopfError> {
    check_sizes(z.len(), omega, input)?;
    for (i, zi) in z.iter_mut().enumerate() {
        let (x, y) = resonator_update(zi.re, zi.im, omega[i], input[i].re, input[i].im, p);
        if !(x.is_finite() && y.is_finite()) {
            return Err(HopfError::Divergence { oscillator: i, step });
        }
        *zi = Complex64::new(x, y);
    }
    Ok(())
}

/// One Euler step with the input driving `μ(t)`. Returns the number of clamp
/// events (radius or `μ` floor).
pub fn hopf_step_am(
    r: &mut [f64],
    theta: &mut [f64],
    omega: &[f64],
    input: &[Complex64],
    p: &HopfDynamics,
    step: usize,
) -> Result<usize, HopfError> {
    check_sizes(r.len(), omega, input)?;
    let mut clamps = 0;
    for i in 0..r.len() {
        let (mu, mu_clamped) = modulated_mu(p, input[i].re);
        let (next, r_clamped) = radius_update(r[i], mu, p.beta, p.dt);
        if !next.is_finite() {
            return Err(HopfError::Divergence { oscillator: i, step });
        }
        clamps += mu_clamped as usize + r_clamped as usize;
        r[i] = next;
        theta[i] += p.dt * omega[i];
    }
    Ok(clamps)
}

/// One Euler step with the input shifting the instantaneous frequency.
pub fn hopf_step_fm(
    r: &mut [f64],
    theta: &mut [f64],
    omega: &[f64],
    input: &[Complex64],
    p: &HopfDynamics,
    step: usize,
) -> Result<usize, HopfError> {
    check_sizes(r.len(), omega, input)?;
    let mut clamps = 0;
    for i in 0..r.len() {
        let (next, r_clamped) = radius_update(r[i], p.mu, p.beta, p.dt);
        let th = theta[i] + p.dt * (omega[i] + p.kappa * input[i].re);
        if !(next.is_finite() && th.is_finite()) {
            return Err(HopfError::Divergence { oscillator: i, step });
        }
        clamps += r_clamped as usize;
        r[i] = next;
        theta[i] = th;
    }
    Ok(clamps)
}

/// Advances `state` by one Euler step of length `p.dt` in the given mode.
pub fn hopf_step(
    state: &mut OscillatorState,
    mode: InputMode,
    omega: &[f64],
    input: &[Complex64],
    p: &HopfDynamics,
    step: usize,
) -> Result<usize, HopfError> {
    match (mode, state) {
        (InputMode::Resonator, OscillatorState::Cartesian(z)) => {
            hopf_step_resonator(z, omega, input, p, step).map(|_| 0)
        }
        (InputMode::AmplitudeMod, OscillatorState::Polar { r, theta }) => {
            hopf_step_am(r, theta, omega, input, p, step)
        }
        (InputMode::FrequencyMod, OscillatorState::Polar { r, theta }) => {
            hopf_step_fm(r, theta, omega, input, p, step)
        }
        (mode, _) => Err(HopfError::Config(format!(
            "state representation does not match mode {}",
            mode.name()
        ))),
    }
}

/// Everything the reverse pass needs from a forward unroll.
#[derive(Debug, Clone)]
pub struct HopfTrace {
    mode: InputMode,
    dynamics: HopfDynamics,
    units: usize,
    steps: usize,
    substeps: usize,
    /// Per unit, `steps * substeps + 1` states: (x, y) or (r, θ).
    a: Vec<f64>,
    b: Vec<f64>,
    /// Radius clamped on entering state k (polar modes).
    r_clamped: Vec<bool>,
    /// `μ(t)` clamped for sample t (amplitude modulation).
    mu_clamped: Vec<bool>,
    pub clamp_events: usize,
}

/// Runs the oscillators over a `[units, T]` (or `[..., T]`) input and returns
/// the `[.., T]` complex activations together with a trace for BPTT.
pub fn unroll_forward(
    mode: InputMode,
    dynamics: HopfDynamics,
    substeps: usize,
    r_init: f64,
    omega: &[f64],
    phases: &[f64],
    input: &ComplexTensor,
) -> Result<(ComplexTensor, HopfTrace), HopfError> {
    let shape = input.shape();
    let steps = *shape.last().unwrap_or(&0);
    let units = omega.len();
    if steps == 0 {
        return Err(HopfError::EmptySequence);
    }
    if input.len() != units * steps || phases.len() != units {
        return Err(HopfError::Size {
            state: units,
            input: input.len() / steps,
        });
    }
    let per_unit = steps * substeps + 1;
    let mut trace = HopfTrace {
        mode,
        dynamics,
        units,
        steps,
        substeps,
        a: vec![0.0; units * per_unit],
        b: vec![0.0; units * per_unit],
        r_clamped: if mode == InputMode::Resonator {
            Vec::new()
        } else {
            vec![false; units * per_unit]
        },
        mu_clamped: if mode == InputMode::AmplitudeMod {
            vec![false; units * steps]
        } else {
            Vec::new()
        },
        clamp_events: 0,
    };
    let mut out = ComplexTensor::zeros(shape);
    let p = dynamics;
    let (ure, uim) = (input.re(), input.im());
    for u in 0..units {
        let base = u * per_unit;
        let w = omega[u];
        let (mut s0, mut s1) = match mode {
            InputMode::Resonator => (r_init * phases[u].cos(), r_init * phases[u].sin()),
            _ => (r_init, phases[u]),
        };
        trace.a[base] = s0;
        trace.b[base] = s1;
        let mut k = 0;
        for t in 0..steps {
            let (xr, xi) = (ure[u * steps + t], uim[u * steps + t]);
            match mode {
                InputMode::Resonator => {
                    for _ in 0..substeps {
                        (s0, s1) = resonator_update(s0, s1, w, xr, xi, &p);
                        k += 1;
                        trace.a[base + k] = s0;
                        trace.b[base + k] = s1;
                    }
                }
                InputMode::AmplitudeMod => {
                    let (mu, mc) = modulated_mu(&p, xr);
                    trace.mu_clamped[u * steps + t] = mc;
                    trace.clamp_events += mc as usize;
                    for _ in 0..substeps {
                        let (r, rc) = radius_update(s0, mu, p.beta, p.dt);
                        s0 = r;
                        s1 += p.dt * w;
                        k += 1;
                        trace.a[base + k] = s0;
                        trace.b[base + k] = s1;
                        trace.r_clamped[base + k] = rc;
                        trace.clamp_events += rc as usize;
                    }
                }
                InputMode::FrequencyMod => {
                    let rate = w + p.kappa * xr;
                    for _ in 0..substeps {
                        let (r, rc) = radius_update(s0, p.mu, p.beta, p.dt);
                        s0 = r;
                        s1 += p.dt * rate;
                        k += 1;
                        trace.a[base + k] = s0;
                        trace.b[base + k] = s1;
                        trace.r_clamped[base + k] = rc;
                        trace.clamp_events += rc as usize;
                    }
                }
            }
            if !(s0.is_finite() && s1.is_finite()) {
                return Err(HopfError::Divergence {
                    oscillator: u,
                    step: t,
                });
            }
            let z = match mode {
                InputMode::Resonator => Complex64::new(s0, s1),
                _ => Complex64::from_polar(s0, s1),
            };
            out.set(u * steps + t, z);
        }
    }
    Ok((out, trace))
}

/// Reverse pass through an unroll. `grad_out` holds `(∂L/∂Re y, ∂L/∂Im y)`
/// for every emitted activation; returns the input adjoint and `∂L/∂ω`.
pub fn unroll_backward(
    trace: &HopfTrace,
    omega: &[f64],
    input: &ComplexTensor,
    grad_out: &ComplexTensor,
) -> (ComplexTensor, Vec<f64>) {
    let HopfTrace {
        mode,
        dynamics: p,
        units,
        steps,
        substeps,
        ..
    } = *trace;
    let per_unit = steps * substeps + 1;
    let h = p.dt;
    let mut g_in = ComplexTensor::zeros(input.shape());
    let mut g_omega = vec![0.0; units];
    let (gre, gim) = (grad_out.re(), grad_out.im());
    let ure = input.re();
    for u in 0..units {
        let base = u * per_unit;
        let w = omega[u];
        let mut gw = 0.0;
        // adjoints of the two state coordinates
        let (mut a0, mut a1) = (0.0, 0.0);
        for t in (0..steps).rev() {
            let idx = u * steps + t;
            let k_out = base + (t + 1) * substeps;
            let (s0, s1) = (trace.a[k_out], trace.b[k_out]);
            match mode {
                InputMode::Resonator => {
                    a0 += gre[idx];
                    a1 += gim[idx];
                }
                _ => {
                    let (sn, cs) = s1.sin_cos();
                    a0 += gre[idx] * cs + gim[idx] * sn;
                    a1 += s0 * (-gre[idx] * sn + gim[idx] * cs);
                }
            }
            match mode {
                InputMode::Resonator => {
                    let (mut gur, mut gui) = (0.0, 0.0);
                    for s in (0..substeps).rev() {
                        let k = base + t * substeps + s;
                        let (x, y) = (trace.a[k], trace.b[k]);
                        gur += h * p.kappa * a0;
                        gui += h * p.kappa * a1;
                        gw += h * (-y * a0 + x * a1);
                        let g = p.mu + p.beta * (x * x + y * y);
                        let cross = 2.0 * p.beta * x * y;
                        let n0 = a0 * (1.0 + h * (g + 2.0 * p.beta * x * x)) + a1 * h * (cross + w);
                        let n1 = a0 * h * (cross - w) + a1 * (1.0 + h * (g + 2.0 * p.beta * y * y));
                        a0 = n0;
                        a1 = n1;
                    }
                    g_in.re_mut()[idx] = gur;
                    g_in.im_mut()[idx] = gui;
                }
                InputMode::AmplitudeMod => {
                    let mc = trace.mu_clamped[idx];
                    let mu = if mc {
                        MU_FLOOR
                    } else {
                        p.mu + p.kappa * ure[idx]
                    };
                    let mut gmu = 0.0;
                    for s in (0..substeps).rev() {
                        let k = base + t * substeps + s;
                        gw += h * a1;
                        if trace.r_clamped[k + 1] {
                            a0 = 0.0;
                        } else {
                            let r = trace.a[k];
                            gmu += a0 * h * r;
                            a0 *= 1.0 + h * (mu + 3.0 * p.beta * r * r);
                        }
                    }
                    if !mc {
                        g_in.re_mut()[idx] = p.kappa * gmu;
                    }
                }
                InputMode::FrequencyMod => {
                    let mut grate = 0.0;
                    for s in (0..substeps).rev() {
                        let k = base + t * substeps + s;
                        grate += h * a1;
                        if trace.r_clamped[k + 1] {
                            a0 = 0.0;
                        } else {
                            let r = trace.a[k];
                            a0 *= 1.0 + h * (p.mu + 3.0 * p.beta * r * r);
                        }
                    }
                    gw += grate;
                    g_in.re_mut()[idx] = p.kappa * grate;
                }
            }
        }
        g_omega[u] = gw;
    }
    (g_in, g_omega)
}

/// Positive real root of `μr + βr³ + F = 0` (steady amplitude of a resonator
/// driven exactly at its natural frequency), by bisection.
pub fn locked_amplitude(mu: f64, beta: f64, force: f64) -> f64 {
    let f = |r: f64| mu * r + beta * r * r * r + force;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dyn_(mu: f64, beta: f64, dt: f64) -> HopfDynamics {
        HopfDynamics {
            mu,
            beta,
            kappa: 1.0,
            dt,
        }
    }

    #[test]
    fn regime_validation() {
        let mut cfg = HopfLayerConfig::new(3, InputMode::Resonator, [1.0, 10.0], 0.001);
        assert!(cfg.validate().is_ok());
        cfg.beta = 1.0;
        assert!(cfg.validate().is_err());
        cfg.beta = -1.0;
        cfg.mu0 = -0.5;
        assert!(cfg.validate().is_err());
        cfg.mu0 = 0.0;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn phase_advance_bound() {
        let mut cfg = HopfLayerConfig::new(3, InputMode::Resonator, [1.0, 10.0], 0.01);
        // 2π·10·0.01 ≈ 0.63 rad per step
        assert!(cfg.validate().is_err());
        cfg.substeps = 2;
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.warnings().len(), 1);
        cfg.substeps = 4;
        assert!(cfg.warnings().is_empty());
    }

    #[test]
    fn am_input_range_positivity() {
        let mut cfg = HopfLayerConfig::new(2, InputMode::AmplitudeMod, [1.0, 5.0], 0.001);
        cfg.input_range = Some([-0.5, 2.0]);
        assert!(cfg.validate().is_ok());
        cfg.input_range = Some([-1.5, 2.0]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_dt_leaves_state_unchanged() {
        let mut z = vec![Complex64::new(0.3, -0.2)];
        let before = z.clone();
        hopf_step_resonator(&mut z, &[5.0], &[Complex64::new(1.0, 1.0)], &dyn_(1.0, -1.0, 0.0), 0)
            .unwrap();
        assert_eq!(z, before);
    }

    #[test]
    fn unforced_resonator_reaches_limit_cycle() {
        let p = dyn_(1.0, -1.0, 1e-3);
        let mut z = vec![Complex64::new(0.1, 0.0), Complex64::new(0.0, 2.5)];
        let zero = vec![Complex64::new(0.0, 0.0); 2];
        for k in 0..20_000 {
            hopf_step_resonator(&mut z, &[0.5, 1.5], &zero, &p, k).unwrap();
        }
        for zi in z {
            assert!((zi.norm() - 1.0).abs() < 1e-3, "{}", zi.norm());
        }
    }

    #[test]
    fn cartesian_euler_radius_bias_matches_discrete_fixed_point() {
        // |1 + dt(μ + βr² + iω)| = 1 fixes the discrete orbit radius.
        let dt = 1e-3;
        let p = dyn_(1.0, -1.0, dt);
        let omega = [3.0, 7.0, 20.0];
        let mut z = vec![Complex64::new(0.5, 0.0); 3];
        let zero = vec![Complex64::new(0.0, 0.0); 3];
        for k in 0..40_000 {
            hopf_step_resonator(&mut z, &omega, &zero, &p, k).unwrap();
        }
        for (zi, w) in z.iter().zip(omega) {
            let a = ((1.0 - (w * dt).powi(2)).sqrt() - 1.0) / dt;
            let r = ((a - 1.0) / -1.0f64).sqrt();
            assert!((zi.norm() - r).abs() < 1e-9, "{} vs {r}", zi.norm());
        }
    }

    #[test]
    fn divergence_is_reported_with_index() {
        let p = dyn_(1.0, -1.0, 1.0);
        let mut z = vec![Complex64::new(0.1, 0.0), Complex64::new(1e200, 0.0)];
        let err = hopf_step_resonator(&mut z, &[0.0, 0.0], &[Complex64::default(); 2], &p, 17)
            .unwrap_err();
        assert_eq!(
            err,
            HopfError::Divergence {
                oscillator: 1,
                step: 17
            }
        );
    }

    #[test]
    fn am_constant_input_fixed_point() {
        let p = dyn_(0.5, -2.0, 1e-3);
        let (mut r, mut th) = (vec![0.1], vec![0.0]);
        let input = [Complex64::new(0.7, 0.0)];
        for k in 0..40_000 {
            hopf_step_am(&mut r, &mut th, &[1.0], &input, &p, k).unwrap();
        }
        let expected = ((0.5 + 0.7) / 2.0f64).sqrt();
        assert!((r[0] - expected).abs() < 1e-6);
    }

    #[test]
    fn am_zero_input_advances_phase_exactly() {
        let p = dyn_(1.0, -1.0, 1e-2);
        let (mut r, mut th) = (vec![0.1], vec![0.25]);
        for k in 0..10 {
            let before = th[0];
            hopf_step_am(&mut r, &mut th, &[4.0], &[Complex64::default()], &p, k).unwrap();
            assert!((th[0] - before - 0.04).abs() < 1e-15);
        }
    }

    #[test]
    fn am_clamps_are_counted() {
        let p = dyn_(0.1, -1.0, 1e-2);
        let (mut r, mut th) = (vec![0.5], vec![0.0]);
        let clamps = hopf_step_am(&mut r, &mut th, &[1.0], &[Complex64::new(-5.0, 0.0)], &p, 0)
            .unwrap();
        assert_eq!(clamps, 1);
    }

    #[test]
    fn fm_constant_input_phase() {
        let p = HopfDynamics {
            mu: 1.0,
            beta: -1.0,
            kappa: 0.5,
            dt: 1e-3,
        };
        let (mut r, mut th) = (vec![0.1], vec![0.3]);
        let c = 2.0;
        for k in 0..1000 {
            hopf_step_fm(&mut r, &mut th, &[6.0], &[Complex64::new(c, 0.0)], &p, k).unwrap();
        }
        let expected = 0.3 + 1000.0 * 1e-3 * (6.0 + 0.5 * c);
        assert!((th[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn fm_zero_input_matches_am_zero_input() {
        let p = dyn_(1.0, -1.0, 1e-3);
        let (mut r1, mut t1) = (vec![0.2], vec![0.0]);
        let (mut r2, mut t2) = (vec![0.2], vec![0.0]);
        let zero = [Complex64::default()];
        for k in 0..500 {
            hopf_step_fm(&mut r1, &mut t1, &[2.0], &zero, &p, k).unwrap();
            hopf_step_am(&mut r2, &mut t2, &[2.0], &zero, &p, k).unwrap();
        }
        assert_eq!(r1, r2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn locked_amplitude_root() {
        let r = locked_amplitude(1.0, -100.0, 0.2);
        assert!((r - 100.0 * r.powi(3) + 0.2).abs() < 1e-12);
        assert!(r > 0.1 && r < 0.2);
        assert!((locked_amplitude(1.0, -1.0, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unroll_matches_stepwise_api() {
        for mode in [InputMode::Resonator, InputMode::AmplitudeMod, InputMode::FrequencyMod] {
            let mut cfg = HopfLayerConfig::new(2, mode, [1.0, 3.0], 0.01);
            cfg.substeps = 3;
            cfg.theta_init_seed = 9;
            let steps = 6;
            let input = ComplexTensor::from_parts(
                &[2, steps],
                (0..12).map(|i| (i as f64 * 0.7).sin()).collect(),
                (0..12).map(|i| (i as f64 * 0.3).cos()).collect(),
            )
            .unwrap();
            let omega = [7.0, 11.0];
            let phases = cfg.initial_phases();
            let (out, _) =
                unroll_forward(mode, cfg.dynamics(), 3, cfg.r_init, &omega, &phases, &input).unwrap();
            let mut state = cfg.initial_state();
            for t in 0..steps {
                let u: Vec<_> = (0..2).map(|i| input.get(i * steps + t)).collect();
                for s in 0..3 {
                    hopf_step(&mut state, mode, &omega, &u, &cfg.dynamics(), t * 3 + s).unwrap();
                }
                for (i, z) in state.output().into_iter().enumerate() {
                    assert!((out.get(i * steps + t) - z).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        let input = ComplexTensor::zeros(&[1, 0]);
        let err = unroll_forward(
            InputMode::Resonator,
            dyn_(1.0, -1.0, 0.01),
            1,
            0.1,
            &[1.0],
            &[0.0],
            &input,
        )
        .unwrap_err();
        assert_eq!(err, HopfError::EmptySequence);
    }
}
