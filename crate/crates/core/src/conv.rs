//! Complex 2D convolution over frame sequences, and the blurred natural
//! frequency maps used by oscillator grids.
//!
//! Feature maps are laid out `[H, W, C, T]`; kernels `[C_out, C_in, kh, kw]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{ComplexTensor, ShapeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must be positive, got {0:?}")]
    Dimensions(Vec<usize>),
    #[error("frequency range must satisfy 0 < f_lo < f_hi, got [{0}, {1}]")]
    Range(f64, f64),
}

/// Natural frequencies (Hz) for an `[H, W, C]` oscillator grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMap2D {
    pub shape: [usize; 3],
    pub grid: Vec<f64>,
    pub seed: u64,
}

impl FrequencyMap2D {
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        let [_, w, ch] = self.shape;
        self.grid[(y * w + x) * ch + c]
    }
}

/// Normalized 3×3 Gaussian kernel with σ = 1, row-major.
pub fn gaussian_kernel3() -> [f64; 9] {
    let mut k = [0.0; 9];
    for dy in 0..3 {
        for dx in 0..3 {
            let (a, b) = (dy as f64 - 1.0, dx as f64 - 1.0);
            k[dy * 3 + dx] = (-(a * a + b * b) / 2.0).exp();
        }
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Mirror index about the border without repeating the edge sample
/// (`-1 → 1`, `n → n-2`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Per-channel 3×3 Gaussian blur of an `[H, W, C]` field with reflected borders.
pub fn blur3(field: &[f64], shape: [usize; 3]) -> Vec<f64> {
    let [h, w, c] = shape;
    let k = gaussian_kernel3();
    let mut out = vec![0.0; field.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for dy in 0..3 {
                    for dx in 0..3 {
                        let yy = reflect(y as isize + dy as isize - 1, h);
                        let xx = reflect(x as isize + dx as isize - 1, w);
                        acc += k[dy * 3 + dx] * field[(yy * w + xx) * c + ch];
                    }
                }
                out[(y * w + x) * c + ch] = acc;
            }
        }
    }
    out
}

/// Uniform i.i.d. frequencies in `[f_lo, f_hi]`, then a 3×3 Gaussian blur per
/// channel. Deterministic in `seed`.
pub fn init_frequency_grid(
    shape: [usize; 3],
    range: [f64; 2],
    seed: u64,
) -> Result<FrequencyMap2D, GridError> {
    if shape.contains(&0) {
        return Err(GridError::Dimensions(shape.to_vec()));
    }
    let [lo, hi] = range;
    if !(lo > 0.0 && lo < hi) {
        return Err(GridError::Range(lo, hi));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    Ok(FrequencyMap2D {
        shape,
        grid: blur3(&raw, shape),
        seed,
    })
}

pub(crate) struct ConvDims {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub t: usize,
}

pub(crate) fn conv_dims(
    input: &[usize],
    kernel: &[usize],
    bias: &[usize],
) -> Result<ConvDims, ShapeError> {
    let ok = input.len() == 4
        && kernel.len() == 4
        && kernel[1] == input[2]
        && kernel[2] % 2 == 1
        && kernel[3] % 2 == 1
        && bias == [kernel[0]];
    if !ok {
        return Err(ShapeError::Mismatch {
            op: "conv2d",
            lhs: input.to_vec(),
            rhs: kernel.to_vec(),
        });
    }
    Ok(ConvDims {
        h: input[0],
        w: input[1],
        cin: input[2],
        t: input[3],
        cout: kernel[0],
        kh: kernel[2],
        kw: kernel[3],
    })
}

/// Visits every (output pixel, kernel tap) pair whose source pixel is inside
/// the frame, with same-padding offsets.
#[inline]
fn for_each_tap(d: &ConvDims, mut f: impl FnMut(usize, usize, usize, usize)) {
    let (ph, pw) = ((d.kh / 2) as isize, (d.kw / 2) as isize);
    for y in 0..d.h {
        for x in 0..d.w {
            for ky in 0..d.kh {
                let sy = y as isize + ky as isize - ph;
                if sy < 0 || sy >= d.h as isize {
                    continue;
                }
                for kx in 0..d.kw {
                    let sx = x as isize + kx as isize - pw;
                    if sx < 0 || sx >= d.w as isize {
                        continue;
                    }
                    let out_pix = y * d.w + x;
                    let in_pix = sy as usize * d.w + sx as usize;
                    f(out_pix, in_pix, ky, kx);
                }
            }
        }
    }
}

/// Complex same-padded, stride-1 convolution applied to every frame.
pub fn conv2d(
    input: &ComplexTensor,
    kernel: &ComplexTensor,
    bias: &ComplexTensor,
) -> Result<ComplexTensor, ShapeError> {
    let d = conv_dims(input.shape(), kernel.shape(), bias.shape())?;
    let mut out = ComplexTensor::zeros(&[d.h, d.w, d.cout, d.t]);
    let (kre, kim) = (kernel.re(), kernel.im());
    let (xre, xim) = (input.re(), input.im());
    {
        let (ore, oim) = out.parts_mut();
        for pix in 0..d.h * d.w {
            for co in 0..d.cout {
                let o = (pix * d.cout + co) * d.t;
                ore[o..o + d.t].fill(bias.re()[co]);
                oim[o..o + d.t].fill(bias.im()[co]);
            }
        }
        for_each_tap(&d, |out_pix, in_pix, ky, kx| {
            for co in 0..d.cout {
                let o = (out_pix * d.cout + co) * d.t;
                for ci in 0..d.cin {
                    let ki = ((co * d.cin + ci) * d.kh + ky) * d.kw + kx;
                    let (a, b) = (kre[ki], kim[ki]);
                    let s = (in_pix * d.cin + ci) * d.t;
                    for t in 0..d.t {
                        let (xr, xi) = (xre[s + t], xim[s + t]);
                        ore[o + t] += a * xr - b * xi;
                        oim[o + t] += a * xi + b * xr;
                    }
                }
            }
        });
    }
    Ok(out)
}

/// Adjoints of [`conv2d`] with respect to input, kernel and bias.
pub fn conv2d_backward(
    input: &ComplexTensor,
    kernel: &ComplexTensor,
    grad_out: &ComplexTensor,
) -> (ComplexTensor, ComplexTensor, ComplexTensor) {
    let d = conv_dims(input.shape(), kernel.shape(), &[kernel.shape()[0]])
        .expect("shapes validated in forward");
    let mut gx = ComplexTensor::zeros(input.shape());
    let mut gk = ComplexTensor::zeros(kernel.shape());
    let mut gb = ComplexTensor::zeros(&[d.cout]);
    let (kre, kim) = (kernel.re(), kernel.im());
    let (xre, xim) = (input.re(), input.im());
    let (gre, gim) = (grad_out.re(), grad_out.im());
    {
        let (gbr, gbi) = gb.parts_mut();
        for pix in 0..d.h * d.w {
            for co in 0..d.cout {
                let o = (pix * d.cout + co) * d.t;
                gbr[co] += gre[o..o + d.t].iter().sum::<f64>();
                gbi[co] += gim[o..o + d.t].iter().sum::<f64>();
            }
        }
    }
    {
        let (gxr, gxi) = gx.parts_mut();
        let (gkr, gki) = gk.parts_mut();
        for_each_tap(&d, |out_pix, in_pix, ky, kx| {
            for co in 0..d.cout {
                let o = (out_pix * d.cout + co) * d.t;
                for ci in 0..d.cin {
                    let ki = ((co * d.cin + ci) * d.kh + ky) * d.kw + kx;
                    let (a, b) = (kre[ki], kim[ki]);
                    let s = (in_pix * d.cin + ci) * d.t;
                    let (mut sr, mut si) = (0.0, 0.0);
                    for t in 0..d.t {
                        let (g0, g1) = (gre[o + t], gim[o + t]);
                        // conj(k) · g
                        gxr[s + t] += a * g0 + b * g1;
                        gxi[s + t] += a * g1 - b * g0;
                        // conj(x) · g
                        let (xr, xi) = (xre[s + t], xim[s + t]);
                        sr += xr * g0 + xi * g1;
                        si += xr * g1 - xi * g0;
                    }
                    gkr[ki] += sr;
                    gki[ki] += si;
                }
            }
        });
    }
    (gx, gk, gb)
}
