//! `mslg` command-line front end: dataset generation, training, evaluation,
//! sweeps and label export.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 input/output
//! error, 4 numerical abort.

pub mod error;
pub mod eval;
pub mod export;
pub mod gen;
pub mod kv;
pub mod paths;
pub mod sweep;
pub mod train;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mslg::trainer::Method;

use crate::error::CliError;
use crate::gen::{parse_noise, GenSpec, Source};
use crate::kv::parse_tokens;
use crate::paths::resolve;
use crate::train::{LABELS_SNAP, MODEL_CKPT};

#[derive(Debug, Parser)]
#[command(name = "mslg", version, about = "Meta soft-label training under label noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate or load a dataset, split it and corrupt the training split.
    Gen(GenArgs),
    /// Train with the CE baseline or meta soft labels.
    Train(TrainArgs),
    /// Score a run against the dataset's hidden labels (JSON report).
    Eval(EvalArgs),
    /// Repeat gen, train and eval over one axis and several seeds.
    Sweep(SweepArgs),
    /// Write a label snapshot as CSV.
    ExportLabels(ExportArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct SourceOpts {
    /// Gaussian blobs: n=2000 c=4 d=2 sep=6
    #[arg(long, num_args = 0.., value_name = "KEY=VALUE")]
    blobs: Option<Vec<String>>,
    /// Interleaved spirals: n=600 c=3 noise=0.05
    #[arg(long, num_args = 0.., value_name = "KEY=VALUE")]
    spirals: Option<Vec<String>>,
    /// IDX image/label pair: images=PATH labels=PATH
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    idx: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct DataOpts {
    #[command(flatten)]
    source: SourceOpts,
    /// Label noise on the training split as KIND:RATIO (uniform or feature_dependent)
    #[arg(long, default_value = "uniform:0")]
    noise: String,
    /// Fraction of all samples held out as the clean meta-set
    #[arg(long, default_value_t = 0.02)]
    meta: f64,
    /// Fraction of all samples held out as the clean test set
    #[arg(long, default_value_t = 0.2)]
    test: f64,
}

impl DataOpts {
    fn spec(&self, seed: u64) -> Result<GenSpec, CliError> {
        let s = &self.source;
        let source = if let Some(t) = &s.blobs {
            Source::blobs(&parse_tokens(t)?)?
        } else if let Some(t) = &s.spirals {
            Source::spirals(&parse_tokens(t)?)?
        } else if let Some(t) = &s.idx {
            Source::idx(&parse_tokens(t)?)?
        } else {
            return Err(CliError::config("no data source given"));
        };
        let (noise_kind, noise_ratio) = parse_noise(&self.noise)?;
        Ok(GenSpec {
            source,
            noise_kind,
            noise_ratio,
            meta_fraction: self.meta,
            test_fraction: self.test,
            seed,
            probe: Default::default(),
        })
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    data: DataOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset directory
    #[arg(long, default_value = "dataset")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainOpts {
    #[arg(long, default_value = "mslg", value_parser = clap::value_parser!(Method))]
    method: Method,
    /// Named preset applied first
    #[arg(long)]
    preset: Option<String>,
    /// `key = value` config file applied over the preset
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override, applied over the file (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    /// Parameter learning rates as EPOCH:LR,... (a bare number is constant)
    #[arg(long)]
    lambda_schedule: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    total_epochs: Option<usize>,
    #[arg(long)]
    entropy_weight: Option<f64>,
    #[arg(long)]
    hvp_epsilon: Option<f64>,
    /// Hidden layer widths, comma separated
    #[arg(long)]
    hidden_layers: Option<String>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

impl TrainOpts {
    fn overrides(&self, seed: Option<u64>) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got `{s}`")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        let s = |v: Option<f64>| v.map(|x| x.to_string());
        let u = |v: Option<usize>| v.map(|x| x.to_string());
        flag("alpha", s(self.alpha));
        flag("beta", s(self.beta));
        flag("k", s(self.k));
        flag("lambda_schedule", self.lambda_schedule.clone());
        flag("batch_size", u(self.batch_size));
        flag("momentum", s(self.momentum));
        flag("weight_decay", s(self.weight_decay));
        flag("warmup_epochs", u(self.warmup_epochs));
        flag("total_epochs", u(self.total_epochs));
        flag("entropy_weight", s(self.entropy_weight));
        flag("hvp_epsilon", s(self.hvp_epsilon));
        flag("hidden_layers", self.hidden_layers.clone());
        flag("checkpoint_every", u(self.checkpoint_every));
        flag("seed", seed.map(|x| x.to_string()));
        Ok(out)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory written by `gen`
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    opts: TrainOpts,
    #[arg(long)]
    seed: Option<u64>,
    /// Output run directory
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Run directory; supplies model.ckpt and labels.snap unless overridden
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Report path (default: <run>/eval.json)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    opts: TrainOpts,
    /// meta_fraction, noise_ratio or beta
    #[arg(long)]
    axis: sweep::Axis,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Run directory holding labels.snap
    #[arg(long, required_unless_present = "labels")]
    run: Option<PathBuf>,
    /// Snapshot file, instead of <run>/labels.snap
    #[arg(long)]
    labels: Option<PathBuf>,
    /// CSV path or `-` for stdout (default: <run>/labels.csv)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => {
            let spec = a.data.spec(a.seed)?;
            let out = resolve(&a.out);
            let b = gen::write_dataset(&out, &spec)?;
            println!(
                "wrote {} ({} train, {} meta, {} test; {} corrupted)",
                out.display(),
                b.train.len(),
                b.meta.len(),
                b.test.len(),
                b.train.corrupted().len()
            );
        }
        Command::Train(a) => {
            let config = train::resolve_config(
                a.opts.preset.as_deref(),
                a.opts.config.as_deref(),
                &a.opts.overrides(a.seed)?,
            )?;
            let out = resolve(&a.out);
            let summary = train::run_train(&train::TrainRequest {
                data_dir: resolve(&a.data),
                out_dir: out.clone(),
                method: a.opts.method,
                preset: a.opts.preset.clone(),
                config,
            })?;
            if let Some(m) = summary.last {
                println!(
                    "trained {} epochs into {}: test accuracy {:.4}, label recovery {:.4}",
                    summary.epochs,
                    out.display(),
                    m.test_accuracy,
                    m.label_recovery_rate
                );
            }
            if summary.skipped_label_rows + summary.aborted_label_batches > 0 {
                eprintln!(
                    "warning: {} label rows and {} label batches skipped on non-finite gradients",
                    summary.skipped_label_rows, summary.aborted_label_batches
                );
            }
        }
        Command::Eval(a) => {
            let run = resolve(&a.run);
            let ckpt = a.checkpoint.unwrap_or_else(|| run.join(MODEL_CKPT));
            let labels = a.labels.unwrap_or_else(|| run.join(LABELS_SNAP));
            let report = eval::evaluate(&resolve(&a.data), &ckpt, &labels)?;
            let json = eval::to_json(&report);
            let out = a.out.unwrap_or_else(|| run.join("eval.json"));
            std::fs::write(&out, &json).map_err(|e| CliError::io(&out, e))?;
            print!("{json}");
        }
        Command::Sweep(a) => {
            let req = sweep::SweepRequest {
                gen: a.data.spec(0)?,
                method: a.opts.method,
                preset: a.opts.preset.clone(),
                config_file: a.opts.config.clone(),
                overrides: a.opts.overrides(None)?,
                axis: a.axis,
                values: a.values,
                seeds: a.seeds,
                out: resolve(&a.out),
            };
            let rows = sweep::run_sweep(&req)?;
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            println!(
                "{} runs ({failed} failed) into {}",
                rows.len(),
                req.out.display()
            );
            if failed > 0 {
                eprintln!("warning: see runs.csv for the failed runs");
            }
        }
        Command::ExportLabels(a) => {
            let run = a.run.as_deref().map(resolve);
            let snapshot = match (&a.labels, &run) {
                (Some(l), _) => l.clone(),
                (None, Some(r)) => r.join(LABELS_SNAP),
                (None, None) => return Err(CliError::config("need --run or --labels")),
            };
            let out = match (a.out, &run) {
                (Some(o), _) => o,
                (None, Some(r)) => r.join("labels.csv"),
                (None, None) => PathBuf::from("-"),
            };
            export::export_labels(&snapshot, &out)?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mslg: {e}");
            e.exit_code()
        }
    }
}
