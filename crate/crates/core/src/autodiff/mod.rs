//! Reverse-mode automatic differentiation over complex tensors.
//!
//! A [`Tape`] records one forward pass. Every primitive appends a node holding
//! its output value and what it needs for the adjoint. [`Tape::backward`]
//! walks the nodes once in reverse order.
//!
//! Gradients follow the real-coordinate convention: for a complex entry
//! `w = a + ib` the stored gradient is `∂L/∂a + i ∂L/∂b`. Under that
//! convention the adjoint of `y = w·x` with respect to `x` is `conj(w)·ḡ`.

mod param;

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::activation::Activation;
use crate::conv;
use crate::oscillator::{self, HopfDynamics, HopfError, HopfTrace, InputMode};
use crate::tensor::{matmul_dims, ComplexTensor, ShapeError};

pub use param::{Gradients, ParamId, ParamStore, Parameter};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Hopf(#[from] HopfError),
    #[error("usage error: {0}")]
    Usage(String),
}

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    AddBias,
    Add,
    Sub,
    Mul,
    Scale,
    Activation,
    Reshape,
    SumRe,
    NormSqrSum,
    MseReal,
    Conv2d,
    Hopf,
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Scales every adjoint produced by one kind of op. Used to verify that
/// gradient checks catch broken adjoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointFault {
    pub kind: OpKind,
    pub factor: f64,
}

enum Op {
    Leaf(Option<ParamId>),
    MatMul { w: usize, x: usize },
    AddBias { x: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, s: f64 },
    Activation { x: usize, f: Activation },
    Reshape { x: usize },
    SumRe { x: usize },
    NormSqrSum { x: usize },
    MseReal { pred: usize, target: ComplexTensor },
    Conv2d { x: usize, k: usize, b: usize },
    Hopf { x: usize, omega: usize, trace: Box<HopfTrace> },
}

impl Op {
    fn inputs(&self) -> [Option<usize>; 3] {
        match *self {
            Op::Leaf(_) => [None; 3],
            Op::MatMul { w, x } => [Some(w), Some(x), None],
            Op::AddBias { x, b } => [Some(x), Some(b), None],
            Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => [Some(a), Some(b), None],
            Op::Scale { a, .. } => [Some(a), None, None],
            Op::Activation { x, .. }
            | Op::Reshape { x }
            | Op::SumRe { x }
            | Op::NormSqrSum { x } => [Some(x), None, None],
            Op::MseReal { pred, .. } => [Some(pred), None, None],
            Op::Conv2d { x, k, b } => [Some(x), Some(k), Some(b)],
            Op::Hopf { x, omega, .. } => [Some(x), Some(omega), None],
        }
    }

    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf(_) => OpKind::Leaf,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::AddBias { .. } => OpKind::AddBias,
            Op::Add { .. } => OpKind::Add,
            Op::Sub { .. } => OpKind::Sub,
            Op::Mul { .. } => OpKind::Mul,
            Op::Scale { .. } => OpKind::Scale,
            Op::Activation { .. } => OpKind::Activation,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::SumRe { .. } => OpKind::SumRe,
            Op::NormSqrSum { .. } => OpKind::NormSqrSum,
            Op::MseReal { .. } => OpKind::MseReal,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Hopf { .. } => OpKind::Hopf,
        }
    }
}

struct Node {
    value: ComplexTensor,
    op: Op,
    /// False when no parameter feeds this node; its adjoint is never built.
    needs_grad: bool,
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    clamp_events: usize,
    fault: Option<AdjointFault>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            clamp_events: 0,
            fault: None,
        }
    }

    pub fn set_adjoint_fault(&mut self, fault: Option<AdjointFault>) {
        self.fault = fault;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Oscillator clamp events recorded during this forward pass.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    fn push(&mut self, value: ComplexTensor, op: Op) -> Var {
        let needs_grad = match op {
            Op::Leaf(p) => p.is_some(),
            _ => op.inputs().iter().flatten().any(|&j| self.nodes[j].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize, AutodiffError> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(AutodiffError::Usage(
                "variable does not belong to this tape".into(),
            ));
        }
        Ok(v.idx)
    }

    fn val(&self, i: usize) -> &ComplexTensor {
        &self.nodes[i].value
    }

    pub fn value(&self, v: Var) -> &ComplexTensor {
        let i = self.idx(v).expect("variable from another tape");
        self.val(i)
    }

    pub fn constant(&mut self, value: ComplexTensor) -> Var {
        self.push(value, Op::Leaf(None))
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Leaf(Some(id)))
    }

    pub fn matmul(&mut self, w: Var, x: Var) -> Result<Var, AutodiffError> {
        let (wi, xi) = (self.idx(w)?, self.idx(x)?);
        let out = ComplexTensor::matmul(self.val(wi), self.val(xi))?;
        Ok(self.push(out, Op::MatMul { w: wi, x: xi }))
    }

    /// `x + b` with `b: [m]` broadcast over the trailing axes of `x: [m, ...]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, AutodiffError> {
        let (xi, bi) = (self.idx(x)?, self.idx(b)?);
        let (xv, bv) = (self.val(xi), self.val(bi));
        if bv.shape().len() != 1 || xv.shape().first() != bv.shape().first() {
            return Err(ShapeError::Mismatch {
                op: "add_bias",
                lhs: xv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            }
            .into());
        }
        let m = bv.len();
        let cols = if m == 0 { 0 } else { xv.len() / m };
        let mut out = xv.clone();
        {
            let (re, im) = out.parts_mut();
            for i in 0..m {
                let (br, bim) = (bv.re()[i], bv.im()[i]);
                re[i * cols..(i + 1) * cols].iter_mut().for_each(|v| *v += br);
                im[i * cols..(i + 1) * cols].iter_mut().for_each(|v| *v += bim);
            }
        }
        Ok(self.push(out, Op::AddBias { x: xi, b: bi }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let mut out = self.val(ai).clone();
        out.add_assign(self.val(bi))?;
        Ok(self.push(out, Op::Add { a: ai, b: bi }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let mut out = self.val(ai).clone();
        out.add_scaled(self.val(bi), -1.0)?;
        Ok(self.push(out, Op::Sub { a: ai, b: bi }))
    }

    /// Elementwise complex product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (self.val(ai), self.val(bi));
        av.check_same("mul", bv)?;
        let mut out = ComplexTensor::zeros(av.shape());
        for i in 0..av.len() {
            out.set(i, av.get(i) * bv.get(i));
        }
        Ok(self.push(out, Op::Mul { a: ai, b: bi }))
    }

    /// Multiplication by a real constant.
    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, AutodiffError> {
        let ai = self.idx(a)?;
        let out = self.val(ai).scale(s);
        Ok(self.push(out, Op::Scale { a: ai, s }))
    }

    pub fn activation(&mut self, x: Var, f: Activation) -> Result<Var, AutodiffError> {
        let xi = self.idx(x)?;
        let out = crate::activation::split_activation(self.val(xi), f);
        Ok(self.push(out, Op::Activation { x: xi, f }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let xi = self.idx(x)?;
        let out = self.val(xi).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape { x: xi }))
    }

    /// Real scalar `Σ Re x`.
    pub fn sum_re(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let xi = self.idx(x)?;
        let s = self.val(xi).re().iter().sum();
        Ok(self.push(ComplexTensor::scalar(s), Op::SumRe { x: xi }))
    }

    /// Real scalar `Σ |x|²`.
    pub fn norm_sqr_sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let xi = self.idx(x)?;
        let v = self.val(xi);
        let s = v.re().iter().chain(v.im()).map(|a| a * a).sum();
        Ok(self.push(ComplexTensor::scalar(s), Op::NormSqrSum { x: xi }))
    }

    /// Mean over all entries of `(Re pred − target)²`.
    pub fn mse_real(&mut self, pred: Var, target: &ComplexTensor) -> Result<Var, AutodiffError> {
        let pi = self.idx(pred)?;
        let pv = self.val(pi);
        pv.check_same("mse_loss", target)?;
        let n = pv.len().max(1) as f64;
        let s: f64 = pv
            .re()
            .iter()
            .zip(target.re())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(
            ComplexTensor::scalar(s / n),
            Op::MseReal {
                pred: pi,
                target: target.clone(),
            },
        ))
    }

    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (xi, ki, bi) = (self.idx(x)?, self.idx(kernel)?, self.idx(bias)?);
        let out = conv::conv2d(self.val(xi), self.val(ki), self.val(bi))?;
        Ok(self.push(out, Op::Conv2d { x: xi, k: ki, b: bi }))
    }

    /// Forward-Euler unroll of a bank of independent oscillators driven by
    /// `input: [..., T]`. `omega` holds natural frequencies in rad/s (real part).
    #[allow(clippy::too_many_arguments)]
    pub fn hopf(
        &mut self,
        input: Var,
        omega: Var,
        mode: InputMode,
        dynamics: HopfDynamics,
        substeps: usize,
        r_init: f64,
        phases: &[f64],
    ) -> Result<Var, AutodiffError> {
        let (xi, wi) = (self.idx(input)?, self.idx(omega)?);
        let (out, trace) = oscillator::unroll_forward(
            mode,
            dynamics,
            substeps,
            r_init,
            self.val(wi).re(),
            phases,
            self.val(xi),
        )?;
        self.clamp_events += trace.clamp_events;
        Ok(self.push(
            out,
            Op::Hopf {
                x: xi,
                omega: wi,
                trace: Box::new(trace),
            },
        ))
    }

    /// Adjoints of every parameter leaf with respect to the real scalar `loss`.
    pub fn gradients(&self, loss: Var, n_params: usize) -> Result<Gradients, AutodiffError> {
        let li = self.idx(loss)?;
        let lv = self.val(li);
        if lv.len() != 1 || lv.im()[0] != 0.0 {
            return Err(AutodiffError::Usage(format!(
                "backward needs a real scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<ComplexTensor>> = (0..=li).map(|_| None).collect();
        let mut seed = ComplexTensor::zeros(lv.shape());
        seed.re_mut()[0] = 1.0;
        grads[li] = Some(seed);
        let mut out = Gradients::empty(n_params);
        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let factor = match self.fault {
                Some(f) if f.kind == node.op.kind() => f.factor,
                _ => 1.0,
            };
            let needs = |j: usize| self.nodes[j].needs_grad;
            let send = |j: usize, gj: ComplexTensor, grads: &mut Vec<Option<ComplexTensor>>| {
                if !self.nodes[j].needs_grad {
                    return;
                }
                let gj = if factor != 1.0 { gj.scale(factor) } else { gj };
                match &mut grads[j] {
                    Some(acc) => acc.add_assign(&gj).expect("adjoint shape"),
                    slot => *slot = Some(gj),
                }
            };
            match &node.op {
                Op::Leaf(Some(pid)) => {
                    if *pid >= ParamId(n_params) {
                        return Err(AutodiffError::Usage(format!(
                            "parameter {} outside store of {n_params}",
                            pid.0
                        )));
                    }
                    out.add(*pid, g);
                }
                Op::Leaf(None) => {}
                Op::MatMul { w, x } => {
                    let (wv, xv) = (self.val(*w), self.val(*x));
                    let (m, n, cols) = matmul_dims(wv.shape(), xv.shape())?;
                    let (gr, gi) = (g.re(), g.im());
                    if needs(*w) {
                        // gW = g · xᴴ
                        let mut gw = ComplexTensor::zeros(wv.shape());
                        let (gwr, gwi) = gw.parts_mut();
                        for r in 0..m {
                            let (g0, g1) = (&gr[r * cols..(r + 1) * cols], &gi[r * cols..(r + 1) * cols]);
                            for c in 0..n {
                                let xr = &xv.re()[c * cols..(c + 1) * cols];
                                let xim = &xv.im()[c * cols..(c + 1) * cols];
                                gwr[r * n + c] += dot(g0, xr) + dot(g1, xim);
                                gwi[r * n + c] += dot(g1, xr) - dot(g0, xim);
                            }
                        }
                        send(*w, gw, &mut grads);
                    }
                    if needs(*x) {
                        // gx = Wᴴ · g
                        let mut gx = ComplexTensor::zeros(xv.shape());
                        let (gxr, gxi) = gx.parts_mut();
                        for r in 0..m {
                            let (g0, g1) = (&gr[r * cols..(r + 1) * cols], &gi[r * cols..(r + 1) * cols]);
                            for c in 0..n {
                                let (a, b) = (wv.re()[r * n + c], wv.im()[r * n + c]);
                                let dxr = &mut gxr[c * cols..(c + 1) * cols];
                                for ((d, &p), &q) in dxr.iter_mut().zip(g0).zip(g1) {
                                    *d += a * p + b * q;
                                }
                                let dxi = &mut gxi[c * cols..(c + 1) * cols];
                                for ((d, &p), &q) in dxi.iter_mut().zip(g0).zip(g1) {
                                    *d += a * q - b * p;
                                }
                            }
                        }
                        send(*x, gx, &mut grads);
                    }
                }
                Op::AddBias { x, b } => {
                    let m = self.val(*b).len();
                    let cols = if m == 0 { 0 } else { g.len() / m };
                    let mut gb = ComplexTensor::zeros(&[m]);
                    for i in 0..m {
                        gb.re_mut()[i] = g.re()[i * cols..(i + 1) * cols].iter().sum();
                        gb.im_mut()[i] = g.im()[i * cols..(i + 1) * cols].iter().sum();
                    }
                    send(*b, gb, &mut grads);
                    send(*x, g, &mut grads);
                }
                Op::Add { a, b } => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g, &mut grads);
                }
                Op::Sub { a, b } => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g.scale(-1.0), &mut grads);
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    let mut ga = ComplexTensor::zeros(av.shape());
                    let mut gb = ComplexTensor::zeros(bv.shape());
                    for i in 0..g.len() {
                        let gi = g.get(i);
                        ga.set(i, bv.get(i).conj() * gi);
                        gb.set(i, av.get(i).conj() * gi);
                    }
                    send(*a, ga, &mut grads);
                    send(*b, gb, &mut grads);
                }
                Op::Scale { a, s } => send(*a, g.scale(*s), &mut grads),
                Op::Activation { x, f } => {
                    let (xv, yv) = (self.val(*x), &node.value);
                    let mut gx = g;
                    {
                        let (gr, gi) = gx.parts_mut();
                        for k in 0..gr.len() {
                            gr[k] *= f.derivative(xv.re()[k], yv.re()[k]);
                            gi[k] *= f.derivative(xv.im()[k], yv.im()[k]);
                        }
                    }
                    send(*x, gx, &mut grads);
                }
                Op::Reshape { x } => {
                    let shape = self.val(*x).shape().to_vec();
                    send(*x, g.reshape(&shape)?, &mut grads);
                }
                Op::SumRe { x } => {
                    let xv = self.val(*x);
                    let gx = ComplexTensor::from_real(xv.shape(), vec![g.re()[0]; xv.len()])?;
                    send(*x, gx, &mut grads);
                }
                Op::NormSqrSum { x } => send(*x, self.val(*x).scale(2.0 * g.re()[0]), &mut grads),
                Op::MseReal { pred, target } => {
                    let pv = self.val(*pred);
                    let c = 2.0 * g.re()[0] / pv.len().max(1) as f64;
                    let re = pv
                        .re()
                        .iter()
                        .zip(target.re())
                        .map(|(p, t)| c * (p - t))
                        .collect();
                    send(*pred, ComplexTensor::from_real(pv.shape(), re)?, &mut grads);
                }
                Op::Conv2d { x, k, b } => {
                    let (gx, gk, gb) = conv::conv2d_backward(self.val(*x), self.val(*k), &g);
                    send(*x, gx, &mut grads);
                    send(*k, gk, &mut grads);
                    send(*b, gb, &mut grads);
                }
                Op::Hopf { x, omega, trace } => {
                    let wv = self.val(*omega);
                    let (gx, gw) = oscillator::unroll_backward(trace, wv.re(), self.val(*x), &g);
                    send(*x, gx, &mut grads);
                    send(*omega, ComplexTensor::from_real(wv.shape(), gw)?, &mut grads);
                }
            }
        }
        Ok(out)
    }

    /// Runs the reverse pass and adds the result into `store`'s gradient
    /// buffers.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), AutodiffError> {
        let grads = self.gradients(loss, store.len())?;
        store.accumulate(&grads, 1.0);
        Ok(())
    }
}
