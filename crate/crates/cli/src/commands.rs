use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use oscnet::autodiff::{AdjointFault, OpKind, Tape};
use oscnet::gradcheck::{grad_check_with, GradCheckReport};
use oscnet::io::{load_checkpoint, save_checkpoint, save_dataset, write_dataset_csv, Checkpoint};
use oscnet::layers::LayerSpec;
use oscnet::resonance::{resonance_sweep, SweepConfig, SweepPoint};
use oscnet::tasks::{Dataset, TaskKind, TaskSample};
use oscnet::training::{evaluate, Evaluation, TrainError, TrainHistory, Trainer};
use oscnet::{ComplexTensor, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{generate_dataset, ExperimentConfig};
use crate::error::CliError;

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRACES_FILE: &str = "traces.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const EVAL_FILE: &str = "eval.csv";

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Divergence { .. } | TrainError::NonFiniteGradient(_) | TrainError::Autodiff(_) => {
            CliError::Numerical(e.to_string())
        }
        TrainError::EmptyDataset => CliError::Usage(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Generates a dataset into the binary container at `out`, with an optional
/// CSV export next to it.
pub fn generate(cfg: &ExperimentConfig, out: &Path, csv: bool) -> Result<Dataset, CliError> {
    let ds = cfg.dataset()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    save_dataset(&ds, out).map_err(|e| match e {
        oscnet::io::ContainerError::Io(io) => CliError::io(out, io),
        other => other.into(),
    })?;
    if csv {
        let path = out.with_extension("csv");
        write_dataset_csv(&ds, create(&path)?).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(ds)
}

/// Config for `generate --task` without a config file.
pub fn task_config(task: TaskKind, seed: u64, samples: Option<usize>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(&format!("task = \"{task}\"")).expect("minimal config");
    cfg.seed = seed;
    cfg.data.samples = samples;
    cfg
}

pub struct TrainOutcome {
    pub history: TrainHistory,
    pub network: Network,
    pub dataset: Dataset,
    pub split: usize,
    pub out_dir: PathBuf,
}

impl TrainOutcome {
    pub fn validation(&self) -> &[TaskSample] {
        &self.dataset.samples[self.split..]
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.val_loss)
    }
}

fn split_point(ds: &Dataset, ratio: f64) -> usize {
    ds.split(ratio).0.len()
}

/// Trains per `cfg`, optionally resuming from `resume`, and writes metrics,
/// timing, traces, the config echo and a final checkpoint to `cfg.out_dir`.
pub fn train(cfg: &ExperimentConfig, resume: Option<&Checkpoint>, dataset: Option<Dataset>) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let dataset = match dataset {
        Some(ds) if ds.is_empty() => return Err(CliError::Usage("dataset is empty".into())),
        Some(ds) => ds,
        None => cfg.dataset()?,
    };
    let network = cfg.build_network(&dataset)?;
    for spec in &network.specs {
        if let LayerSpec::Hopf(h) | LayerSpec::Ocnn { oscillator: h, .. } = spec {
            for w in h.warnings() {
                eprintln!("warning: {w}");
            }
        }
    }
    let mut training = cfg.training.clone();
    training.seed = cfg.seed;
    training.threads = cfg.threads();
    let split = split_point(&dataset, training.train_val_split);
    let (train_set, val_set) = dataset.samples.split_at(split);
    let mut trainer = Trainer::new(network, training).map_err(train_error)?;
    if let Some(ckpt) = resume {
        ckpt.restore_trainer(&mut trainer)?;
    }

    let out_dir = cfg.out_dir.clone();
    ensure_dir(&out_dir)?;
    let echo = cfg.to_toml();
    fs::write(out_dir.join(CONFIG_FILE), &echo).map_err(|e| CliError::io(&out_dir.join(CONFIG_FILE), e))?;

    let total = cfg.training.epochs;
    let every = (total / 20).max(1);
    let history = trainer
        .run_with(train_set, val_set, |r| {
            if r.epoch % every == 0 || r.epoch == total {
                eprintln!(
                    "epoch {}/{total} train {:.5} val {:.5} ({:.2}s)",
                    r.epoch, r.train_loss, r.val_loss, r.seconds
                );
            }
        })
        .map_err(train_error)?;

    let metrics = out_dir.join(METRICS_FILE);
    history
        .write_metrics_csv(create(&metrics)?)
        .map_err(|e| CliError::io(&metrics, e))?;
    write_timing(&history, &out_dir.join(TIMING_FILE))?;
    let ckpt = Checkpoint::from_trainer(&trainer, echo);
    let ckpt_path = out_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &ckpt_path)?;
    let traced = &val_set[..cfg.trace_samples.min(val_set.len())];
    write_traces(&trainer.network, traced, &out_dir.join(TRACES_FILE))?;

    Ok(TrainOutcome {
        history,
        network: trainer.network,
        dataset,
        split,
        out_dir,
    })
}

fn write_timing(history: &TrainHistory, path: &Path) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Row {
        epoch: usize,
        seconds: f64,
    }
    let mut w = headerless(path)?;
    w.write_record(["epoch", "seconds"]).map_err(|e| csv_error(path, e))?;
    for r in &history.epochs {
        w.serialize(Row {
            epoch: r.epoch,
            seconds: r.seconds,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Header rows are written explicitly so they appear even with no data rows.
fn headerless(path: &Path) -> Result<csv::Writer<std::io::BufWriter<fs::File>>, CliError> {
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

/// One row per (sample, output channel, time step).
pub fn write_traces(network: &Network, samples: &[TaskSample], path: &Path) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Row {
        sample: usize,
        channel: usize,
        time: f64,
        desired: f64,
        predicted: f64,
        predicted_im: f64,
    }
    let mut w = headerless(path)?;
    w.write_record(["sample", "channel", "time", "desired", "predicted", "predicted_im"])
        .map_err(|e| csv_error(path, e))?;
    for (i, s) in samples.iter().enumerate() {
        let pred = predict(network, s)?;
        let steps = s.steps();
        for c in 0..s.target.len() / steps {
            for t in 0..steps {
                let k = c * steps + t;
                let row = Row {
                    sample: i,
                    channel: c,
                    time: t as f64 * s.dt,
                    desired: s.target.re()[k],
                    predicted: pred.re()[k],
                    predicted_im: pred.im()[k],
                };
                w.serialize(row).map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn predict(network: &Network, sample: &TaskSample) -> Result<ComplexTensor, CliError> {
    let mut tape = Tape::new();
    let y = network
        .forward(&mut tape, &sample.input)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(tape.value(y).clone())
}

/// Rebuilds the network described by a checkpoint and loads its weights.
pub fn restore_network(ckpt: &Checkpoint) -> Result<(ExperimentConfig, Network), CliError> {
    let cfg = ExperimentConfig::from_toml(&ckpt.config)?;
    let probe = generate_dataset(&cfg, cfg.task_kind()?, Some(1))?;
    let mut network = cfg.build_network(&probe)?;
    ckpt.load_params(&mut network.store)?;
    Ok((cfg, network))
}

pub struct EvalOutcome {
    pub evaluation: Evaluation,
    pub samples: usize,
}

/// Evaluates a checkpoint on `dataset`, or on the validation split of the
/// dataset its configuration generates.
pub fn eval(ckpt_path: &Path, dataset: Option<Dataset>, out: Option<&Path>) -> Result<EvalOutcome, CliError> {
    let ckpt = load_checkpoint_file(ckpt_path)?;
    let (cfg, network) = restore_network(&ckpt)?;
    let full;
    let samples: &[TaskSample] = match &dataset {
        Some(ds) => {
            if ds.is_empty() {
                return Err(CliError::Usage("dataset is empty".into()));
            }
            let mut want = network.input_shape.clone();
            let got = ds.input_shape().expect("non-empty");
            want.push(*got.last().expect("time axis"));
            if got != want.as_slice() {
                return Err(CliError::Usage(format!(
                    "dataset input shape {got:?} is incompatible with the checkpoint network {want:?}"
                )));
            }
            &ds.samples
        }
        None => {
            full = cfg.dataset()?;
            let split = split_point(&full, cfg.training.train_val_split);
            &full.samples[split..]
        }
    };
    if samples.is_empty() {
        return Err(CliError::Usage("no samples to evaluate".into()));
    }
    let evaluation = evaluate(&network, samples).map_err(|e| match e {
        TrainError::Autodiff(a) => CliError::Usage(format!("incompatible dataset: {a}")),
        other => train_error(other),
    })?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let path = dir.join(EVAL_FILE);
        let mut w = create(&path)?;
        writeln!(w, "samples,loss,accuracy")
            .and_then(|_| {
                writeln!(
                    w,
                    "{},{},{}",
                    samples.len(),
                    evaluation.loss,
                    evaluation.accuracy.map(|a| a.to_string()).unwrap_or_default()
                )
            })
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&path, e))?;
        let traced = &samples[..cfg.trace_samples.min(samples.len())];
        write_traces(&network, traced, &dir.join(TRACES_FILE))?;
    }
    Ok(EvalOutcome {
        evaluation,
        samples: samples.len(),
    })
}

/// Runs the sweep and writes `omega_diff, amplitude, locked, mean_psi, ...`.
pub fn sweep(cfg: &SweepConfig, out: &Path) -> Result<Vec<SweepPoint>, CliError> {
    if cfg.steps < 10 || !(cfg.dt > 0.0) || !(cfg.tail > 0.0 && cfg.tail <= 1.0) {
        return Err(CliError::Usage("sweep needs steps >= 10, dt > 0 and tail in (0, 1]".into()));
    }
    if cfg.omega_diffs.is_empty() {
        return Err(CliError::Usage("empty frequency grid".into()));
    }
    let points = resonance_sweep(cfg);
    #[derive(Serialize)]
    struct Row {
        omega_diff: f64,
        amplitude: f64,
        locked: u8,
        mean_psi: f64,
        psi_std: f64,
        psi_drift: f64,
        slipping: u8,
        settled: u8,
        diverged: u8,
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let mut w = csv::Writer::from_writer(create(out)?);
    for p in &points {
        w.serialize(Row {
            omega_diff: p.omega_diff,
            amplitude: p.amplitude,
            locked: p.locked as u8,
            mean_psi: p.mean_psi,
            psi_std: p.psi_std,
            psi_drift: p.psi_drift,
            slipping: p.slipping as u8,
            settled: p.settled as u8,
            diverged: p.diverged as u8,
        })
        .map_err(|e| csv_error(out, e))?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;
    Ok(points)
}

/// Largest per-axis size used by the miniature gradient check.
const MINI_WIDTH: usize = 4;
const MINI_FILTERS: usize = 2;
const MINI_SIDE: usize = 5;
const MINI_STEPS: usize = 20;

/// Shrinks widths, filter counts, image size and sequence length while
/// keeping layer kinds, activations and oscillator settings.
pub fn miniature(network: &Network, steps: usize) -> Result<(Network, Vec<usize>), CliError> {
    let specs: Vec<LayerSpec> = network
        .specs
        .iter()
        .map(|s| match s {
            LayerSpec::Dense { width, activation } => LayerSpec::Dense {
                width: (*width).min(MINI_WIDTH),
                activation: *activation,
            },
            LayerSpec::Hopf(h) => {
                let mut h = h.clone();
                h.width = h.width.min(MINI_WIDTH);
                LayerSpec::Hopf(h)
            }
            LayerSpec::Conv {
                filters,
                kernel,
                activation,
            } => LayerSpec::Conv {
                filters: (*filters).min(MINI_FILTERS),
                kernel: (*kernel).min(3),
                activation: *activation,
            },
            LayerSpec::Ocnn {
                filters,
                kernel,
                activation,
                oscillator,
            } => LayerSpec::Ocnn {
                filters: (*filters).min(MINI_FILTERS),
                kernel: (*kernel).min(3),
                activation: *activation,
                oscillator: oscillator.clone(),
            },
        })
        .collect();
    let mut shape = network.input_shape.clone();
    match shape.len() {
        1 => shape[0] = shape[0].min(MINI_WIDTH),
        _ => {
            shape[0] = shape[0].min(MINI_SIDE);
            shape[1] = shape[1].min(MINI_SIDE);
        }
    }
    let mini = Network::build(&shape, &specs, 0).map_err(|e| CliError::Config(e.to_string()))?;
    shape.push(steps.min(MINI_STEPS));
    Ok((mini, shape))
}

pub fn parse_fault(op: &str, factor: f64) -> Result<AdjointFault, CliError> {
    let kind = match op {
        "matmul" => OpKind::MatMul,
        "add_bias" => OpKind::AddBias,
        "activation" => OpKind::Activation,
        "conv" => OpKind::Conv2d,
        "hopf" => OpKind::Hopf,
        other => {
            return Err(CliError::Usage(format!(
                "unknown op {other}; expected matmul, add_bias, activation, conv or hopf"
            )))
        }
    };
    Ok(AdjointFault { kind, factor })
}

/// Central-difference check of a miniature instance of the configured
/// architecture on random inputs.
pub fn gradcheck(cfg: &ExperimentConfig, tolerance: f64, fault: Option<AdjointFault>) -> Result<GradCheckReport, CliError> {
    cfg.validate()?;
    let probe = generate_dataset(cfg, cfg.task_kind()?, Some(1))?;
    let full = cfg.build_network(&probe)?;
    let (mini, in_shape) = miniature(&full, probe.samples[0].steps())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut random = |shape: &[usize], complex: bool| {
        let n: usize = shape.iter().product();
        let re = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let im = (0..n)
            .map(|_| if complex { rng.random_range(-1.0..1.0) } else { 0.0 })
            .collect();
        ComplexTensor::from_parts(shape, re, im).expect("sized by shape")
    };
    let input = random(&in_shape, false);
    let mut out_shape = mini.output_shape.clone();
    out_shape.push(*in_shape.last().expect("time axis"));
    let target = random(&out_shape, false);
    grad_check_with(&mini, &input, &target, 1e-6, tolerance, fault).map_err(|e| CliError::Numerical(e.to_string()))
}

pub fn load_dataset_file(path: &Path) -> Result<Dataset, CliError> {
    oscnet::io::load_dataset(path).map_err(|e| match e {
        oscnet::io::ContainerError::Io(io) => CliError::io(path, io),
        other => other.into(),
    })
}

pub fn load_checkpoint_file(path: &Path) -> Result<Checkpoint, CliError> {
    load_checkpoint(path).map_err(|e| match e {
        oscnet::io::ContainerError::Io(io) => CliError::io(path, io),
        other => other.into(),
    })
}
