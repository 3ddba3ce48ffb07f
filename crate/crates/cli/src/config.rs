//! Experiment configuration files.
//!
//! One TOML document fully determines a run:
//!
//! ```toml
//! task = "signal-generation"
//! seed = 0
//! out_dir = "runs/signal-generation"
//!
//! [data]
//! samples = 20
//! [data.options]          # generator-specific, see the task option structs
//! repeats = 5
//!
//! [oscillator]            # defaults for every hopf/ocnn layer
//! mode = "amplitude_mod"
//! range_hz = [1.0, 10.0]
//! substeps = 2
//!
//! [training]
//! learning_rate = 0.01
//! epochs = 3000
//!
//! [[layers]]
//! kind = "dense"
//! width = 10
//! activation = "relu"
//! ```
//!
//! Layer entries may override any `[oscillator]` key. The top-level `seed`
//! drives data generation, weight initialization and shuffling.

use std::path::{Path, PathBuf};

use oscnet::layers::LayerSpec;
use oscnet::oscillator::{HopfLayerConfig, InputMode};
use oscnet::tasks::{
    gen_am_demodulation_with, gen_filtering_dataset_with, gen_moving_squares_with, gen_operator_dataset_with,
    gen_signal_generation_with, gen_trajectory_dataset_with, Dataset, OperatorKind, TaskKind,
};
use oscnet::training::TrainingConfig;
use oscnet::{Activation, Network};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Validation samples written to `traces.csv`.
    #[serde(default = "default_trace_samples")]
    pub trace_samples: usize,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub oscillator: OscillatorSettings,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub layers: Vec<LayerEntry>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_trace_samples() -> usize {
    4
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Number of samples; the task default when absent.
    pub samples: Option<usize>,
    /// Generator options, deserialized into the task's option struct.
    #[serde(default)]
    pub options: toml::Table,
}

/// Oscillator keys that may appear in `[oscillator]` or on a layer entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorSettings {
    pub mode: Option<InputMode>,
    /// Natural frequency initialization range, Hz.
    pub range_hz: Option<[f64; 2]>,
    pub trainable_freq: Option<bool>,
    /// Defaults to the dataset sample period.
    pub dt: Option<f64>,
    pub mu0: Option<f64>,
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub substeps: Option<usize>,
    pub r_init: Option<f64>,
}

impl OscillatorSettings {
    fn or(&self, base: &OscillatorSettings) -> OscillatorSettings {
        OscillatorSettings {
            mode: self.mode.or(base.mode),
            range_hz: self.range_hz.or(base.range_hz),
            trainable_freq: self.trainable_freq.or(base.trainable_freq),
            dt: self.dt.or(base.dt),
            mu0: self.mu0.or(base.mu0),
            beta: self.beta.or(base.beta),
            kappa: self.kappa.or(base.kappa),
            substeps: self.substeps.or(base.substeps),
            r_init: self.r_init.or(base.r_init),
        }
    }

    /// Fills unset keys from library defaults and validates the result.
    fn resolve(&self, width: usize, dataset_dt: f64) -> Result<HopfLayerConfig, String> {
        let range = self.range_hz.ok_or("oscillator range_hz is not set")?;
        let mut cfg = HopfLayerConfig::new(
            width,
            self.mode.unwrap_or(InputMode::Resonator),
            range,
            self.dt.unwrap_or(dataset_dt),
        );
        cfg.trainable_freq = self.trainable_freq.unwrap_or(cfg.trainable_freq);
        cfg.mu0 = self.mu0.unwrap_or(cfg.mu0);
        cfg.beta = self.beta.unwrap_or(cfg.beta);
        cfg.kappa = self.kappa.unwrap_or(cfg.kappa);
        cfg.substeps = self.substeps.unwrap_or(cfg.substeps);
        cfg.r_init = self.r_init.unwrap_or(cfg.r_init);
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Hopf,
    Conv,
    Ocnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub kind: LayerKind,
    pub width: Option<usize>,
    pub filters: Option<usize>,
    pub kernel: Option<usize>,
    pub activation: Option<Activation>,
    #[serde(flatten)]
    pub oscillator: OscillatorSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    pub fn task_kind(&self) -> Result<TaskKind, CliError> {
        self.task.parse().map_err(|e: oscnet::tasks::UnknownTask| CliError::Config(e.to_string()))
    }

    /// Applies command-line overrides. The seed also reseeds training.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<&Path>, epochs: Option<usize>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out_dir = o.to_path_buf();
        }
        if let Some(e) = epochs {
            self.training.epochs = e;
        }
        self.training.seed = self.seed;
    }

    /// Every problem found, joined, rather than the first.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errs = Vec::new();
        let task = self.task_kind();
        if let Err(e) = &task {
            errs.push(detail(e));
        }
        if let Err(e) = self.training.validate() {
            errs.push(e.to_string());
        }
        if self.layers.is_empty() {
            errs.push("no [[layers]] given".into());
        }
        if let Ok(task) = task {
            if let Err(e) = self.generator_check(task) {
                errs.push(e);
            }
            // Shape propagation needs a dataset; a single sample is enough.
            match generate_dataset(self, task, Some(1)) {
                Ok(ds) => {
                    if let Err(e) = self.build_network(&ds) {
                        errs.push(detail(&e));
                    }
                }
                Err(e) => errs.push(detail(&e)),
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            errs.dedup();
            Err(CliError::Config(errs.join("\n")))
        }
    }

    fn generator_check(&self, task: TaskKind) -> Result<(), String> {
        if self.data.samples == Some(0) {
            return Err("data.samples must be positive".into());
        }
        if task == TaskKind::SignalGeneration && self.data.samples.is_some() {
            return Err("signal-generation has a fixed size; set data.options.repeats instead".into());
        }
        Ok(())
    }

    pub fn layer_specs(&self, dataset_dt: f64) -> Result<Vec<LayerSpec>, CliError> {
        let mut errs = Vec::new();
        let mut specs = Vec::with_capacity(self.layers.len());
        let mut width: Option<usize> = None;
        for (i, l) in self.layers.iter().enumerate() {
            let osc = l.oscillator.or(&self.oscillator);
            let has_osc = l.oscillator != OscillatorSettings::default();
            let mut err = |msg: String| errs.push(format!("layer {i} ({:?}): {msg}", l.kind));
            match l.kind {
                LayerKind::Dense | LayerKind::Conv if has_osc => {
                    err("oscillator keys are only valid on hopf and ocnn layers".into());
                }
                _ => {}
            }
            let spec = match l.kind {
                LayerKind::Dense => match l.width {
                    Some(w) if w > 0 => {
                        width = Some(w);
                        Some(LayerSpec::Dense {
                            width: w,
                            activation: l.activation.unwrap_or(Activation::Identity),
                        })
                    }
                    _ => {
                        err("dense layers need a positive width".into());
                        None
                    }
                },
                LayerKind::Hopf => {
                    let w = l.width.or(width);
                    match (w, osc.resolve(w.unwrap_or(0), dataset_dt)) {
                        (Some(w), Ok(cfg)) if w > 0 => Some(LayerSpec::Hopf(cfg)),
                        (_, Err(e)) => {
                            err(e);
                            None
                        }
                        _ => {
                            err("hopf width must follow a dense layer or be given".into());
                            None
                        }
                    }
                }
                LayerKind::Conv | LayerKind::Ocnn => {
                    width = None;
                    match (l.filters, l.kernel) {
                        (Some(f), Some(k)) if f > 0 && k % 2 == 1 => {
                            let activation = l.activation.unwrap_or(Activation::Identity);
                            if l.kind == LayerKind::Conv {
                                Some(LayerSpec::Conv {
                                    filters: f,
                                    kernel: k,
                                    activation,
                                })
                            } else {
                                match osc.resolve(0, dataset_dt) {
                                    Ok(oscillator) => Some(LayerSpec::Ocnn {
                                        filters: f,
                                        kernel: k,
                                        activation,
                                        oscillator,
                                    }),
                                    Err(e) => {
                                        err(e);
                                        None
                                    }
                                }
                            }
                        }
                        _ => {
                            err("conv layers need filters > 0 and an odd kernel".into());
                            None
                        }
                    }
                }
            };
            specs.extend(spec);
        }
        if errs.is_empty() {
            Ok(specs)
        } else {
            Err(CliError::Config(errs.join("\n")))
        }
    }

    /// Builds the network for `dataset`, seeded from the config.
    pub fn build_network(&self, dataset: &Dataset) -> Result<Network, CliError> {
        let shape = dataset
            .input_shape()
            .ok_or_else(|| CliError::Usage("dataset is empty".into()))?;
        let specs = self.layer_specs(dataset.dt)?;
        let network = Network::build(&shape[..shape.len() - 1], &specs, self.seed)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let want = dataset.target_shape().expect("non-empty");
        let mut got = network.output_shape.clone();
        got.push(*want.last().expect("time axis"));
        if got != want {
            return Err(CliError::Config(format!(
                "network output {:?} does not match target shape {:?}",
                got, want
            )));
        }
        Ok(network)
    }

    pub fn dataset(&self) -> Result<Dataset, CliError> {
        generate_dataset(self, self.task_kind()?, None)
    }

    /// Effective worker threads: the config value capped by `OSCNET_THREADS`.
    pub fn threads(&self) -> usize {
        let cap = std::env::var("OSCNET_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0);
        cap.map_or(self.training.threads, |c| self.training.threads.min(c)).max(1)
    }
}

fn detail(e: &CliError) -> String {
    match e {
        CliError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

fn options<T: DeserializeOwned + Default>(table: &toml::Table) -> Result<T, CliError> {
    if table.is_empty() {
        return Ok(T::default());
    }
    table
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("data.options: {}", e.message())))
}

/// Generates the configured dataset; `limit` caps the sample count.
pub fn generate_dataset(cfg: &ExperimentConfig, task: TaskKind, limit: Option<usize>) -> Result<Dataset, CliError> {
    let n = cfg.data.samples.unwrap_or(task.default_samples());
    let n = limit.map_or(n, |l| n.min(l));
    let opts = &cfg.data.options;
    let seed = cfg.seed;
    let mut ds = match task {
        TaskKind::SignalGeneration => gen_signal_generation_with(seed, &options(opts)?),
        TaskKind::AmDemodulation => gen_am_demodulation_with(seed, n, &options(opts)?),
        TaskKind::Filtering => gen_filtering_dataset_with(seed, n, &options(opts)?),
        TaskKind::Integrate => gen_operator_dataset_with(OperatorKind::Integrate, seed, n, &options(opts)?),
        TaskKind::Differentiate => gen_operator_dataset_with(OperatorKind::Differentiate, seed, n, &options(opts)?),
        TaskKind::Trajectory => gen_trajectory_dataset_with(seed, n, &options(opts)?),
        TaskKind::MovingSquares => gen_moving_squares_with(seed, n, &options(opts)?),
    };
    if let Some(l) = limit {
        ds.samples.truncate(l);
    }
    if ds.is_empty() || ds.samples[0].steps() == 0 {
        return Err(CliError::Config(format!("{task}: configuration produces no data")));
    }
    Ok(ds)
}
