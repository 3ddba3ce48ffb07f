//! Loss, optimizer, ramp classification and the mini-batch training loop.

mod adam;
mod ramp;

use std::io::{self, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Gradients, Tape, Var};
use crate::layers::Network;
use crate::tasks::TaskSample;
use crate::tensor::ComplexTensor;

pub use adam::Adam;
pub use ramp::{classify, make_ramp_targets, RampTarget};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("label {label} out of range for {num_classes} classes")]
    Label { label: usize, num_classes: usize },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {reason}")]
    Divergence {
        epoch: usize,
        batch: usize,
        reason: String,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    32
}
fn default_split() -> f64 {
    0.8
}
fn default_threads() -> usize {
    1
}
fn default_decay() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_epsilon: f64,
    #[serde(default)]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of samples used for training; the rest validate.
    #[serde(default = "default_split")]
    pub train_val_split: f64,
    /// Worker threads for per-sample gradients within a batch. Results are
    /// reduced in sample order, so this does not change the numbers.
    #[serde(default = "default_threads")]
    pub threads: usize,
    /// Learning rate for epoch `e` (0-based) is `learning_rate · lr_decay^e`.
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_epsilon: default_eps(),
            epochs: 0,
            batch_size: default_batch(),
            seed: 0,
            train_val_split: default_split(),
            threads: 1,
            lr_decay: 1.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let mut errs = Vec::new();
        if !(self.learning_rate > 0.0) {
            errs.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                errs.push(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            errs.push(format!("adam_epsilon must be positive, got {}", self.adam_epsilon));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            errs.push(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be at least 1".into());
        }
        if !(self.train_val_split > 0.0 && self.train_val_split <= 1.0) {
            errs.push(format!("train_val_split must lie in (0, 1], got {}", self.train_val_split));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(TrainError::Config(errs.join("; ")))
        }
    }
}

/// Records `mean((Re pred − target)²)` on the tape.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: &ComplexTensor) -> Result<Var, AutodiffError> {
    tape.mse_real(pred, target)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub accuracy: Option<f64>,
    pub clamps: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// `epoch,train_loss,val_loss,accuracy,clamps,seconds`
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss,accuracy,clamps,seconds")?;
        for e in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                e.val_loss,
                e.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                e.clamps,
                e.seconds
            )?;
        }
        Ok(())
    }

    /// Same layout without the wall-clock column, so reruns compare equal
    /// byte for byte.
    pub fn write_metrics_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss,accuracy,clamps")?;
        for e in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                e.val_loss,
                e.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                e.clamps
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub clamps: usize,
}

struct SampleResult {
    loss: f64,
    grads: Gradients,
    clamps: usize,
}

fn sample_gradient(network: &Network, sample: &TaskSample) -> Result<SampleResult, AutodiffError> {
    let mut tape = Tape::new();
    let y = network.forward(&mut tape, &sample.input)?;
    let loss = tape.mse_real(y, &sample.target)?;
    let grads = tape.gradients(loss, network.store.len())?;
    Ok(SampleResult {
        loss: tape.value(loss).re()[0],
        grads,
        clamps: tape.clamp_events(),
    })
}

fn batch_gradients(
    network: &Network,
    batch: &[&TaskSample],
    threads: usize,
) -> Vec<Result<SampleResult, AutodiffError>> {
    if threads <= 1 || batch.len() <= 1 {
        return batch.iter().map(|s| sample_gradient(network, s)).collect();
    }
    let chunk = batch.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|s| sample_gradient(network, s))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("gradient worker panicked"))
            .collect()
    })
}

/// Mean loss (and ramp accuracy when samples carry labels) without updating
/// parameters.
pub fn evaluate(network: &Network, samples: &[TaskSample]) -> Result<Evaluation, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    let mut labelled = 0usize;
    let mut clamps = 0;
    for s in samples {
        let mut tape = Tape::new();
        let y = network.forward(&mut tape, &s.input)?;
        let loss = tape.mse_real(y, &s.target)?;
        total += tape.value(loss).re()[0];
        clamps += tape.clamp_events();
        if let Some(label) = s.label {
            labelled += 1;
            correct += (classify(tape.value(y)) == label) as usize;
        }
    }
    Ok(Evaluation {
        loss: total / samples.len() as f64,
        accuracy: (labelled > 0).then(|| correct as f64 / labelled as f64),
        clamps,
    })
}

/// Training state that can be checkpointed and resumed.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub network: Network,
    pub config: TrainingConfig,
    pub optimizer: Adam,
    pub rng: ChaCha8Rng,
    /// Epochs completed so far.
    pub epoch: usize,
}

impl Trainer {
    pub fn new(network: Network, config: TrainingConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let optimizer = Adam::new(&network.store, &config);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            network,
            config,
            optimizer,
            rng,
            epoch: 0,
        })
    }

    /// One pass over `train` in a seeded random order, followed by
    /// validation.
    pub fn run_epoch(&mut self, train: &[TaskSample], val: &[TaskSample]) -> Result<EpochRecord, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let start = Instant::now();
        let epoch = self.epoch;
        self.optimizer.learning_rate = self.config.learning_rate * self.config.lr_decay.powi(epoch as i32);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut loss_sum = 0.0;
        let mut clamps = 0;
        for (batch_idx, idxs) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&TaskSample> = idxs.iter().map(|&i| &train[i]).collect();
            let results = batch_gradients(&self.network, &batch, self.config.threads);
            self.network.store.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let r = r.map_err(|e| TrainError::Divergence {
                    epoch,
                    batch: batch_idx,
                    reason: e.to_string(),
                })?;
                if !r.loss.is_finite() {
                    return Err(TrainError::Divergence {
                        epoch,
                        batch: batch_idx,
                        reason: "non-finite loss".into(),
                    });
                }
                loss_sum += r.loss;
                clamps += r.clamps;
                self.network.store.accumulate(&r.grads, scale);
            }
            self.optimizer
                .update(&mut self.network.store)
                .map_err(|e| TrainError::Divergence {
                    epoch,
                    batch: batch_idx,
                    reason: e.to_string(),
                })?;
        }
        let (val_loss, accuracy) = if val.is_empty() {
            (f64::NAN, None)
        } else {
            let ev = evaluate(&self.network, val)?;
            (ev.loss, ev.accuracy)
        };
        self.epoch += 1;
        Ok(EpochRecord {
            epoch: self.epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            accuracy,
            clamps,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Runs epochs until `config.epochs` have been completed.
    pub fn run(&mut self, train: &[TaskSample], val: &[TaskSample]) -> Result<TrainHistory, TrainError> {
        self.run_with(train, val, |_| {})
    }

    pub fn run_with(
        &mut self,
        train: &[TaskSample],
        val: &[TaskSample],
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<TrainHistory, TrainError> {
        let mut history = TrainHistory::default();
        while self.epoch < self.config.epochs {
            let rec = self.run_epoch(train, val)?;
            on_epoch(&rec);
            history.epochs.push(rec);
        }
        Ok(history)
    }
}

/// Trains `network` in place for `config.epochs` epochs.
pub fn train(
    network: &mut Network,
    train_set: &[TaskSample],
    val_set: &[TaskSample],
    config: &TrainingConfig,
) -> Result<TrainHistory, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut trainer = Trainer::new(network.clone(), config.clone())?;
    let history = trainer.run(train_set, val_set)?;
    *network = trainer.network;
    Ok(history)
}
