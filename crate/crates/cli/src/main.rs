use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oscnet::resonance::{grid, SweepConfig};
use oscnet::tasks::TaskKind;
use oscnet_cli::commands;
use oscnet_cli::{CliError, ExperimentConfig};

/// Deep oscillatory neural networks: data generation, training and analysis.
#[derive(Parser)]
#[command(name = "oscnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset to a binary container.
    Generate {
        /// Task name; ignored when --config is given.
        #[arg(long)]
        task: Option<TaskKind>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also export `<out>.csv`.
        #[arg(long)]
        csv: bool,
    },
    /// Train a network and write metrics, traces and a checkpoint.
    Train {
        #[arg(long, required_unless_present = "checkpoint")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use this dataset container instead of generating one.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Resume from a checkpoint. Its embedded config is used unless
        /// --config is given.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        epochs_override: Option<usize>,
    },
    /// Evaluate a checkpoint without updating it.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the validation split of the checkpoint's own dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Directory for eval.csv and traces.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Steady-state response of one forced oscillator across drive frequencies.
    ResonanceSweep {
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = -100.0, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, default_value_t = 0.2)]
        force: f64,
        /// Natural frequency, rad/s.
        #[arg(long, default_value_t = 10.0)]
        omega: f64,
        /// Drive minus natural frequency grid, rad/s.
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        diff_min: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        diff_max: f64,
        #[arg(long, default_value_t = 41)]
        points: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient check on a miniature copy of the architecture.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Scale the adjoints of one op kind (negative control).
        #[arg(long, hide = true)]
        corrupt: Option<String>,
        #[arg(long, hide = true, default_value_t = 1.01)]
        corrupt_factor: f64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            task,
            config,
            seed,
            samples,
            out,
            csv,
        } => {
            let mut cfg = match (config, task) {
                (Some(path), _) => ExperimentConfig::load(&path)?,
                (None, Some(task)) => commands::task_config(task, 0, None),
                (None, None) => return Err(CliError::Usage("give --task or --config".into())),
            };
            cfg.apply_overrides(seed, None, None);
            if samples.is_some() {
                cfg.data.samples = samples;
            }
            let ds = commands::generate(&cfg, &out, csv)?;
            println!(
                "{}: {} samples, input {:?}, target {:?}, dt {}",
                ds.task,
                ds.len(),
                ds.input_shape().unwrap_or(&[]),
                ds.target_shape().unwrap_or(&[]),
                ds.dt
            );
        }
        Command::Train {
            config,
            seed,
            out,
            dataset,
            checkpoint,
            epochs_override,
        } => {
            let ckpt = checkpoint.as_deref().map(commands::load_checkpoint_file).transpose()?;
            let mut cfg = match (&config, &ckpt) {
                (Some(path), _) => ExperimentConfig::load(path)?,
                (None, Some(c)) => ExperimentConfig::from_toml(&c.config)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            cfg.apply_overrides(seed, out.as_deref(), epochs_override);
            let ds = dataset.as_deref().map(commands::load_dataset_file).transpose()?;
            let outcome = commands::train(&cfg, ckpt.as_ref(), ds)?;
            match outcome.final_val_loss() {
                Some(v) => println!("final validation loss {v}"),
                None => println!("no epochs run"),
            }
            println!("outputs in {}", outcome.out_dir.display());
        }
        Command::Eval {
            checkpoint,
            dataset,
            out,
        } => {
            let ds = dataset.as_deref().map(commands::load_dataset_file).transpose()?;
            let r = commands::eval(&checkpoint, ds, out.as_deref())?;
            println!("samples {} loss {}", r.samples, r.evaluation.loss);
            if let Some(a) = r.evaluation.accuracy {
                println!("accuracy {a}");
            }
        }
        Command::ResonanceSweep {
            mu,
            beta,
            force,
            omega,
            diff_min,
            diff_max,
            points,
            dt,
            steps,
            out,
        } => {
            let cfg = SweepConfig {
                mu,
                beta,
                force,
                omega,
                omega_diffs: grid(diff_min, diff_max, points),
                dt,
                steps,
                ..SweepConfig::default()
            };
            let pts = commands::sweep(&cfg, &out)?;
            let unsettled = pts.iter().filter(|p| !p.settled && !p.diverged).count();
            let diverged = pts.iter().filter(|p| p.diverged).count();
            println!(
                "{} points, {} locked, {unsettled} not settled, {diverged} diverged -> {}",
                pts.len(),
                pts.iter().filter(|p| p.locked).count(),
                out.display()
            );
        }
        Command::Gradcheck {
            config,
            tolerance,
            corrupt,
            corrupt_factor,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let fault = corrupt
                .as_deref()
                .map(|op| commands::parse_fault(op, corrupt_factor))
                .transpose()?;
            let report = commands::gradcheck(&cfg, tolerance, fault)?;
            match report.worst() {
                Some(w) => println!(
                    "{} coordinates, max relative error {:.3e} at {}[{}].{} (analytic {}, numeric {})",
                    report.entries.len(),
                    report.max_rel_error,
                    w.param,
                    w.index,
                    w.part,
                    w.analytic,
                    w.numeric
                ),
                None => println!("no trainable parameters"),
            }
            if !report.passed {
                let w = report.worst().expect("failure implies an entry");
                return Err(CliError::Numerical(format!(
                    "gradient check failed for {} (relative error {:.3e} > {:.0e})",
                    w.param, report.max_rel_error, tolerance
                )));
            }
            println!("pass");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
