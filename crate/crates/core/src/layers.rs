//! Static and oscillatory layers, and the feed-forward [`Network`] that
//! chains them.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activation::Activation;
use crate::autodiff::{AutodiffError, ParamId, ParamStore, Tape, Var};
use crate::conv::{init_frequency_grid, FrequencyMap2D, GridError};
use crate::oscillator::{HopfError, HopfLayerConfig};
use crate::tensor::ComplexTensor;

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("layer {index}: {msg}")]
    Build { index: usize, msg: String },
    #[error("layer {index}: {source}")]
    Hopf { index: usize, source: HopfError },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Declarative description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Complex fully connected layer over the unit axis, applied per time step.
    Dense { width: usize, activation: Activation },
    /// Bank of oscillators, one per incoming unit.
    Hopf(HopfLayerConfig),
    /// Complex same-padded convolution over `[H, W, C, T]` frames.
    Conv {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    /// Convolution feeding a same-shaped oscillator grid one-to-one.
    Ocnn {
        filters: usize,
        kernel: usize,
        activation: Activation,
        oscillator: HopfLayerConfig,
    },
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense {
        w: ParamId,
        b: ParamId,
        activation: Activation,
    },
    Hopf {
        config: HopfLayerConfig,
        omega: ParamId,
        phases: Vec<f64>,
    },
    Conv {
        k: ParamId,
        b: ParamId,
        activation: Activation,
    },
    Ocnn {
        k: ParamId,
        b: ParamId,
        activation: Activation,
        config: HopfLayerConfig,
        omega: ParamId,
        phases: Vec<f64>,
        freq_map: FrequencyMap2D,
    },
}

/// Uniform in `[-1/√fan_in, 1/√fan_in]` for both parts.
fn init_weights(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> ComplexTensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
    let re = draw();
    let im = draw();
    ComplexTensor::from_parts(shape, re, im).expect("sized by shape")
}

fn omega_tensor(hz: &[f64]) -> ComplexTensor {
    ComplexTensor::from_real(&[hz.len()], hz.iter().map(|f| TAU * f).collect()).expect("1-D")
}

/// `f(W·z + b)`; `z` may be `[n]` or `[n, T]`.
pub fn complex_dense_forward(
    tape: &mut Tape,
    z_in: Var,
    w: Var,
    b: Var,
    f: Activation,
) -> Result<Var, AutodiffError> {
    let lin = tape.matmul(w, z_in)?;
    let biased = tape.add_bias(lin, b)?;
    if f == Activation::Identity {
        return Ok(biased);
    }
    tape.activation(biased, f)
}

/// Unrolls a Hopf layer over `z_in: [width, T]`, emitting the post-step
/// complex state at every sample.
pub fn hopf_layer_forward(
    tape: &mut Tape,
    z_in: Var,
    config: &HopfLayerConfig,
    omega: Var,
    phases: &[f64],
) -> Result<Var, AutodiffError> {
    tape.hopf(
        z_in,
        omega,
        config.mode,
        config.dynamics(),
        config.substeps,
        config.r_init,
        phases,
    )
}

/// Convolution + split activation on every frame, each feature-map cell
/// driving its own oscillator. `frames: [H, W, C_in, T]`.
pub fn ocnn_block_forward(
    tape: &mut Tape,
    frames: Var,
    kernel: Var,
    bias: Var,
    activation: Activation,
    config: &HopfLayerConfig,
    omega: Var,
    phases: &[f64],
    freq_map: &FrequencyMap2D,
) -> Result<Var, AutodiffError> {
    let conv = tape.conv2d(frames, kernel, bias)?;
    let features = tape.activation(conv, activation)?;
    let fshape = tape.value(features).shape().to_vec();
    if fshape[..3] != freq_map.shape[..] {
        return Err(AutodiffError::Shape(crate::tensor::ShapeError::Mismatch {
            op: "ocnn_block",
            lhs: fshape[..3].to_vec(),
            rhs: freq_map.shape.to_vec(),
        }));
    }
    tape.hopf(
        features,
        omega,
        config.mode,
        config.dynamics(),
        config.substeps,
        config.r_init,
        phases,
    )
}

/// A feed-forward stack of layers with its parameters.
#[derive(Debug, Clone)]
pub struct Network {
    /// Per-sample input shape without the time axis: `[D]` or `[H, W, C]`.
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub specs: Vec<LayerSpec>,
    pub layers: Vec<Layer>,
    pub store: ParamStore,
}

fn derive_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64 + 1)
        .rotate_left(17)
}

impl Network {
    pub fn build(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self, LayerError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for (index, spec) in specs.iter().enumerate() {
            let fail = |msg: String| LayerError::Build { index, msg };
            let layer = match spec {
                LayerSpec::Dense { width, activation } => {
                    if shape.len() != 1 {
                        return Err(fail(format!(
                            "dense layer needs a flat input, got {shape:?}"
                        )));
                    }
                    let fan_in = shape[0];
                    let w = store.add(
                        format!("layer{index}.dense.w"),
                        init_weights(&mut rng, &[*width, fan_in], fan_in),
                        true,
                    );
                    let b = store.add(
                        format!("layer{index}.dense.b"),
                        ComplexTensor::zeros(&[*width]),
                        true,
                    );
                    shape = vec![*width];
                    Layer::Dense {
                        w,
                        b,
                        activation: *activation,
                    }
                }
                LayerSpec::Hopf(cfg) => {
                    let mut config = cfg.clone();
                    if shape != [config.width] {
                        return Err(fail(format!(
                            "oscillator width {} must equal incoming width {shape:?}",
                            config.width
                        )));
                    }
                    config.theta_init_seed = derive_seed(seed, index);
                    config
                        .validate()
                        .map_err(|source| LayerError::Hopf { index, source })?;
                    let [lo, hi] = config.omega_init_range;
                    let hz: Vec<f64> = (0..config.width)
                        .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                        .collect();
                    let omega = store.add(
                        format!("layer{index}.hopf.omega"),
                        omega_tensor(&hz),
                        config.trainable_freq,
                    );
                    let phases = config.initial_phases();
                    Layer::Hopf {
                        config,
                        omega,
                        phases,
                    }
                }
                LayerSpec::Conv {
                    filters,
                    kernel,
                    activation,
                } => {
                    let (k, b) = Self::conv_params(&mut store, &mut rng, index, &shape, *filters, *kernel)
                        .map_err(fail)?;
                    shape = vec![shape[0], shape[1], *filters];
                    Layer::Conv {
                        k,
                        b,
                        activation: *activation,
                    }
                }
                LayerSpec::Ocnn {
                    filters,
                    kernel,
                    activation,
                    oscillator,
                } => {
                    let (k, b) = Self::conv_params(&mut store, &mut rng, index, &shape, *filters, *kernel)
                        .map_err(fail)?;
                    shape = vec![shape[0], shape[1], *filters];
                    let mut config = oscillator.clone();
                    config.width = shape.iter().product();
                    config.theta_init_seed = derive_seed(seed, index);
                    config
                        .validate()
                        .map_err(|source| LayerError::Hopf { index, source })?;
                    let freq_map = init_frequency_grid(
                        [shape[0], shape[1], shape[2]],
                        config.omega_init_range,
                        derive_seed(seed ^ 0xF00D, index),
                    )?;
                    let omega = store.add(
                        format!("layer{index}.ocnn.omega"),
                        omega_tensor(&freq_map.grid),
                        config.trainable_freq,
                    );
                    let phases = config.initial_phases();
                    Layer::Ocnn {
                        k,
                        b,
                        activation: *activation,
                        config,
                        omega,
                        phases,
                        freq_map,
                    }
                }
            };
            layers.push(layer);
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            output_shape: shape,
            specs: specs.to_vec(),
            layers,
            store,
        })
    }

    fn conv_params(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        index: usize,
        shape: &[usize],
        filters: usize,
        kernel: usize,
    ) -> Result<(ParamId, ParamId), String> {
        if shape.len() != 3 {
            return Err(format!("convolution needs [H, W, C] input, got {shape:?}"));
        }
        if kernel.is_multiple_of(2) {
            return Err(format!("kernel size must be odd, got {kernel}"));
        }
        let cin = shape[2];
        let fan_in = cin * kernel * kernel;
        let k = store.add(
            format!("layer{index}.conv.k"),
            init_weights(rng, &[filters, cin, kernel, kernel], fan_in),
            true,
        );
        let b = store.add(
            format!("layer{index}.conv.b"),
            ComplexTensor::zeros(&[filters]),
            true,
        );
        Ok((k, b))
    }

    /// Records the forward pass of one sample (`[.., T]`) on `tape`.
    pub fn forward(&self, tape: &mut Tape, input: &ComplexTensor) -> Result<Var, AutodiffError> {
        let x = tape.constant(input.clone());
        self.forward_var(tape, x)
    }

    pub fn forward_var(&self, tape: &mut Tape, mut x: Var) -> Result<Var, AutodiffError> {
        let store = &self.store;
        for layer in &self.layers {
            x = match layer {
                Layer::Dense { w, b, activation } => {
                    let (wv, bv) = (tape.param(store, *w), tape.param(store, *b));
                    complex_dense_forward(tape, x, wv, bv, *activation)?
                }
                Layer::Hopf {
                    config,
                    omega,
                    phases,
                } => {
                    let wv = tape.param(store, *omega);
                    hopf_layer_forward(tape, x, config, wv, phases)?
                }
                Layer::Conv { k, b, activation } => {
                    let (kv, bv) = (tape.param(store, *k), tape.param(store, *b));
                    let y = tape.conv2d(x, kv, bv)?;
                    if *activation == Activation::Identity {
                        y
                    } else {
                        tape.activation(y, *activation)?
                    }
                }
                Layer::Ocnn {
                    k,
                    b,
                    activation,
                    config,
                    omega,
                    phases,
                    freq_map,
                } => {
                    let (kv, bv) = (tape.param(store, *k), tape.param(store, *b));
                    let wv = tape.param(store, *omega);
                    ocnn_block_forward(tape, x, kv, bv, *activation, config, wv, phases, freq_map)?
                }
            };
        }
        Ok(x)
    }

    /// Forward pass without keeping the tape.
    pub fn predict(&self, input: &ComplexTensor) -> Result<ComplexTensor, AutodiffError> {
        let mut tape = Tape::new();
        let y = self.forward(&mut tape, input)?;
        Ok(tape.value(y).clone())
    }
}
