//! Dense complex tensors stored as split real/imaginary arrays.
//!
//! Layout is row-major with time (when present) as the last, contiguous axis:
//! a layer activation over `T` steps is `[units, T]`, a video feature map is
//! `[H, W, C, T]`.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Mismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: data length {len} does not match shape {shape:?}")]
    Length {
        op: &'static str,
        len: usize,
        shape: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl ComplexTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = numel(shape);
        Self {
            shape: shape.to_vec(),
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn from_parts(shape: &[usize], re: Vec<f64>, im: Vec<f64>) -> Result<Self, ShapeError> {
        let n = numel(shape);
        if re.len() != n || im.len() != n {
            return Err(ShapeError::Length {
                op: "from_parts",
                len: re.len().max(im.len()),
                shape: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            re,
            im,
        })
    }

    /// Embeds a real array as `x + 0i`.
    pub fn from_real(shape: &[usize], re: Vec<f64>) -> Result<Self, ShapeError> {
        let im = vec![0.0; re.len()];
        Self::from_parts(shape, re, im)
    }

    pub fn from_complex(shape: &[usize], values: &[Complex64]) -> Result<Self, ShapeError> {
        let re = values.iter().map(|c| c.re).collect();
        let im = values.iter().map(|c| c.im).collect();
        Self::from_parts(shape, re, im)
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            re: vec![value],
            im: vec![0.0],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        &mut self.im
    }

    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.re, &mut self.im)
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
        (self.shape, self.re, self.im)
    }

    pub fn get(&self, idx: usize) -> Complex64 {
        Complex64::new(self.re[idx], self.im[idx])
    }

    pub fn set(&mut self, idx: usize, value: Complex64) {
        self.re[idx] = value.re;
        self.im[idx] = value.im;
    }

    pub fn to_complex_vec(&self) -> Vec<Complex64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect()
    }

    /// Same data, new shape.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, ShapeError> {
        if numel(shape) != self.len() {
            return Err(ShapeError::Mismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            re: self.re.clone(),
            im: self.im.iter().map(|v| -v).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            re: self.re.iter().map(|v| v * s).collect(),
            im: self.im.iter().map(|v| v * s).collect(),
        }
    }

    /// Elementwise multiplication by a complex constant.
    pub fn mul_scalar(&self, c: Complex64) -> Self {
        let mut out = Self::zeros(&self.shape);
        for i in 0..self.len() {
            out.set(i, self.get(i) * c);
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), ShapeError> {
        self.check_same("add", other)?;
        self.re.iter_mut().zip(&other.re).for_each(|(a, b)| *a += b);
        self.im.iter_mut().zip(&other.im).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &Self, s: f64) -> Result<(), ShapeError> {
        self.check_same("add_scaled", other)?;
        self.re.iter_mut().zip(&other.re).for_each(|(a, b)| *a += s * b);
        self.im.iter_mut().zip(&other.im).for_each(|(a, b)| *a += s * b);
        Ok(())
    }

    pub fn fill_zero(&mut self) {
        self.re.iter_mut().for_each(|v| *v = 0.0);
        self.im.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        (0..self.len()).find(|&i| !self.re[i].is_finite() || !self.im[i].is_finite())
    }

    pub fn check_same(&self, op: &'static str, other: &Self) -> Result<(), ShapeError> {
        if self.shape != other.shape {
            return Err(ShapeError::Mismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// Complex matrix product `W · z` for `W: [m, n]` and `z: [n]` or `[n, T]`.
    pub fn matmul(w: &Self, z: &Self) -> Result<Self, ShapeError> {
        let (m, n, cols) = matmul_dims(w.shape(), z.shape())?;
        let mut out_shape = vec![m];
        out_shape.extend_from_slice(&z.shape[1..]);
        let mut out = Self::zeros(&out_shape);
        for i in 0..m {
            let (ore, oim) = (
                &mut out.re[i * cols..(i + 1) * cols],
                &mut out.im[i * cols..(i + 1) * cols],
            );
            for j in 0..n {
                let a = w.re[i * n + j];
                let b = w.im[i * n + j];
                let zr = &z.re[j * cols..(j + 1) * cols];
                let zi = &z.im[j * cols..(j + 1) * cols];
                for ((o, &p), &q) in ore.iter_mut().zip(zr).zip(zi) {
                    *o += a * p - b * q;
                }
                for ((o, &p), &q) in oim.iter_mut().zip(zr).zip(zi) {
                    *o += a * q + b * p;
                }
            }
        }
        Ok(out)
    }
}

/// Returns `(m, n, cols)` for a product of `[m, n]` with `[n, ...]`.
pub(crate) fn matmul_dims(w: &[usize], z: &[usize]) -> Result<(usize, usize, usize), ShapeError> {
    if w.len() != 2 || z.is_empty() || z.len() > 2 || w[1] != z[0] {
        return Err(ShapeError::Mismatch {
            op: "complex_matmul",
            lhs: w.to_vec(),
            rhs: z.to_vec(),
        });
    }
    let cols = if z.len() == 2 { z[1] } else { 1 };
    Ok((w[0], w[1], cols))
}
