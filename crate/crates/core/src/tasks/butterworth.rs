//! Butterworth band-pass design as a cascade of second-order sections.
//!
//! Analog low-pass prototype → low-pass to band-pass transform → bilinear
//! transform with pre-warped band edges. An order-`n` design has `2n` poles
//! and is realized as `n` biquads.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("band edges must satisfy 0 < f_lo < f_hi < fs/2, got f_lo={f_lo} f_hi={f_hi} fs={fs}")]
    BandEdges { f_lo: f64, f_hi: f64, fs: f64 },
    #[error("filter order must be at least 1")]
    Order,
}

/// `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn response(&self, zinv: Complex64) -> Complex64 {
        let z2 = zinv * zinv;
        (self.b0 + self.b1 * zinv + self.b2 * z2) / (1.0 + self.a1 * zinv + self.a2 * z2)
    }

    /// Roots of `z² + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub gain: f64,
}

impl BiquadCascade {
    /// Frequency response at `f` Hz for sampling rate `fs`.
    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let zinv = Complex64::from_polar(1.0, -2.0 * PI * f / fs);
        self.sections
            .iter()
            .fold(Complex64::new(self.gain, 0.0), |acc, s| acc * s.response(zinv))
    }

    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        self.response(f, fs).norm()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }
}

/// Designs an order-`order` Butterworth band-pass for `[f_lo, f_hi]` Hz.
pub fn design_butterworth_bandpass(
    order: usize,
    f_lo: f64,
    f_hi: f64,
    fs: f64,
) -> Result<BiquadCascade, FilterError> {
    if order == 0 {
        return Err(FilterError::Order);
    }
    if !(f_lo > 0.0 && f_lo < f_hi && f_hi < fs / 2.0) {
        return Err(FilterError::BandEdges { f_lo, f_hi, fs });
    }
    let fs2 = 2.0 * fs;
    let warp = |f: f64| fs2 * (PI * f / fs).tan();
    let (wl, wh) = (warp(f_lo), warp(f_hi));
    let bw = wh - wl;
    let w0 = (wl * wh).sqrt();

    // Analog band-pass poles: each prototype pole p maps to the two roots of
    // s² − p·bw·s + w0² = 0.
    let n = order as f64;
    let mut analog = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
        let p = Complex64::from_polar(1.0, theta) * (bw / 2.0);
        let root = (p * p - w0 * w0).sqrt();
        analog.push(p + root);
        analog.push(p - root);
    }

    // Bilinear transform; N zeros at s = 0 map to z = 1, the N zeros at
    // infinity map to z = −1.
    let mut gain = Complex64::new(bw.powi(order as i32), 0.0);
    gain *= Complex64::new(fs2.powi(order as i32), 0.0);
    let digital: Vec<Complex64> = analog
        .iter()
        .map(|&s| {
            gain /= fs2 - s;
            (fs2 + s) / (fs2 - s)
        })
        .collect();

    // Conjugate pairs become one section each; real poles (wide bands) are
    // paired with each other.
    let is_real = |p: &Complex64| p.im.abs() <= 1e-12 * p.norm().max(1.0);
    let section = |a1: f64, a2: f64| Biquad {
        b0: 1.0,
        b1: 0.0,
        b2: -1.0,
        a1,
        a2,
    };
    let mut sections: Vec<Biquad> = digital
        .iter()
        .filter(|p| !is_real(p) && p.im > 0.0)
        .map(|p| section(-2.0 * p.re, p.norm_sqr()))
        .collect();
    let mut reals: Vec<f64> = digital.iter().filter(|p| is_real(p)).map(|p| p.re).collect();
    reals.sort_by(f64::total_cmp);
    for pair in reals.chunks(2) {
        let (p, q) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
        sections.push(section(-(p + q), p * q));
    }
    Ok(BiquadCascade {
        sections,
        gain: gain.re,
    })
}

/// Runs `x` through the cascade, direct form II transposed, zero initial state.
pub fn apply_filter(cascade: &BiquadCascade, x: &[f64]) -> Vec<f64> {
    let mut y: Vec<f64> = x.iter().map(|v| v * cascade.gain).collect();
    for s in &cascade.sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in y.iter_mut() {
            let input = *v;
            let out = s.b0 * input + z1;
            z1 = s.b1 * input - s.a1 * out + z2;
            z2 = s.b2 * input - s.a2 * out;
            *v = out;
        }
    }
    y
}
