//! Deterministic synthetic datasets for every benchmark task.
//!
//! Every generator is a pure function of its seed and options. Sample `i`
//! draws from its own ChaCha stream derived from `(seed, i)`, so generation
//! order does not matter.

mod butterworth;
mod signals;
mod trajectory;
mod video;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::ComplexTensor;

pub use butterworth::{apply_filter, design_butterworth_bandpass, Biquad, BiquadCascade, FilterError};
pub use signals::{
    gen_am_demodulation, gen_am_demodulation_with, gen_filtering_dataset, gen_filtering_dataset_with,
    gen_operator_dataset, gen_operator_dataset_with, operator_signals, gen_signal_generation, gen_signal_generation_with,
    AmOptions, FilteringOptions, OperatorKind, OperatorOptions, SignalGenOptions, CARRIER_HZ,
    SIGNAL_FREQUENCIES,
};
pub use trajectory::{gen_trajectory_dataset, gen_trajectory_dataset_with, integrate_reflecting, TrajectoryOptions};
pub use video::{gen_moving_squares, gen_moving_squares_with, render_video, SquareMotion, VideoOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    SignalGeneration,
    AmDemodulation,
    Filtering,
    Integrate,
    Differentiate,
    Trajectory,
    MovingSquares,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::SignalGeneration,
        TaskKind::AmDemodulation,
        TaskKind::Filtering,
        TaskKind::Integrate,
        TaskKind::Differentiate,
        TaskKind::Trajectory,
        TaskKind::MovingSquares,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::SignalGeneration => "signal-generation",
            TaskKind::AmDemodulation => "am-demodulation",
            TaskKind::Filtering => "filtering",
            TaskKind::Integrate => "integrate",
            TaskKind::Differentiate => "differentiate",
            TaskKind::Trajectory => "trajectory",
            TaskKind::MovingSquares => "moving-squares",
        }
    }

    /// Sample count used when the caller does not choose one.
    pub fn default_samples(self) -> usize {
        match self {
            TaskKind::SignalGeneration => 4 * SignalGenOptions::default().repeats,
            TaskKind::MovingSquares => 1000,
            _ => 200,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown task '{0}' (expected one of: signal-generation, am-demodulation, filtering, integrate, differentiate, trajectory, moving-squares)")]
pub struct UnknownTask(pub String);

impl FromStr for TaskKind {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownTask(s.to_string()))
    }
}

/// One supervised example. `input` is `[D_in, T]` (or `[H, W, C, T]` for
/// video) and `target` is real-valued with the same trailing `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSample {
    pub input: ComplexTensor,
    pub target: ComplexTensor,
    /// Class index for ramp-classification tasks.
    pub label: Option<usize>,
    pub dt: f64,
    pub meta: BTreeMap<String, Vec<f64>>,
}

impl TaskSample {
    pub fn steps(&self) -> usize {
        *self.input.shape().last().unwrap_or(&0)
    }

    pub fn duration(&self) -> f64 {
        self.steps() as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: TaskKind,
    pub dt: f64,
    pub samples: Vec<TaskSample>,
    /// Generator parameters shared by all samples.
    pub meta: BTreeMap<String, Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `round(ratio · n)` samples train, the rest validate. At least one
    /// sample always lands in the training part of a nonempty dataset.
    pub fn split(&self, ratio: f64) -> (&[TaskSample], &[TaskSample]) {
        let n = self.samples.len();
        let k = ((n as f64 * ratio).round() as usize).clamp(n.min(1), n);
        self.samples.split_at(k)
    }

    pub fn input_shape(&self) -> Option<&[usize]> {
        self.samples.first().map(|s| s.input.shape())
    }

    pub fn target_shape(&self) -> Option<&[usize]> {
        self.samples.first().map(|s| s.target.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.samples
            .iter()
            .all(|s| s.input.is_finite() && s.target.is_finite())
    }
}

/// Generates `task` with default options.
pub fn generate(task: TaskKind, seed: u64, n_samples: usize) -> Dataset {
    match task {
        TaskKind::SignalGeneration => gen_signal_generation_with(
            seed,
            &SignalGenOptions {
                repeats: n_samples.div_ceil(4).max(1),
                ..Default::default()
            },
        ),
        TaskKind::AmDemodulation => gen_am_demodulation(seed, n_samples),
        TaskKind::Filtering => gen_filtering_dataset(seed, n_samples),
        TaskKind::Integrate => gen_operator_dataset(OperatorKind::Integrate, seed, n_samples),
        TaskKind::Differentiate => gen_operator_dataset(OperatorKind::Differentiate, seed, n_samples),
        TaskKind::Trajectory => gen_trajectory_dataset(seed, n_samples),
        TaskKind::MovingSquares => gen_moving_squares(seed, n_samples),
    }
}

pub(crate) fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub(crate) fn steps_for(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}

pub(crate) fn real_sequence(rows: usize, data: Vec<f64>) -> ComplexTensor {
    let t = data.len() / rows.max(1);
    ComplexTensor::from_real(&[rows, t], data).expect("row-major sequence")
}
