//! Sequential sweeps over one axis and a list of seeds.
//!
//! Each (value, seed) pair becomes `<out>/<axis>-<value>/seed-<seed>/` with a
//! `data/` dataset and a `run/` training directory containing `eval.json`.
//! The seed drives both dataset generation and training. Results go to
//! `runs.csv` (one row per pair) and `cells.csv` (mean and sample standard
//! deviation per value over the successful seeds).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mslg::trainer::Method;

use crate::error::CliError;
use crate::eval::{evaluate, to_json, EvalReport};
use crate::gen::{write_dataset, GenSpec};
use crate::train::{resolve_config, run_train, TrainRequest, LABELS_SNAP, MODEL_CKPT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    MetaFraction,
    NoiseRatio,
    Beta,
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "meta_fraction" => Ok(Axis::MetaFraction),
            "noise_ratio" => Ok(Axis::NoiseRatio),
            "beta" => Ok(Axis::Beta),
            other => Err(format!(
                "unknown axis `{other}` (expected meta_fraction, noise_ratio or beta)"
            )),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::MetaFraction => "meta_fraction",
            Axis::NoiseRatio => "noise_ratio",
            Axis::Beta => "beta",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepRequest {
    pub gen: GenSpec,
    pub method: Method,
    pub preset: Option<String>,
    pub config_file: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunRow {
    pub value: f64,
    pub seed: u64,
    pub result: Result<EvalReport, String>,
}

pub fn cell_dir(out: &Path, axis: Axis, value: f64, seed: u64) -> PathBuf {
    out.join(format!("{axis}-{value}")).join(format!("seed-{seed}"))
}

fn run_one(req: &SweepRequest, value: f64, seed: u64) -> Result<EvalReport, CliError> {
    let dir = cell_dir(&req.out, req.axis, value, seed);
    let mut gen = req.gen.clone();
    gen.seed = seed;
    let mut overrides = req.overrides.clone();
    overrides.push(("seed".into(), seed.to_string()));
    match req.axis {
        Axis::MetaFraction => gen.meta_fraction = value,
        Axis::NoiseRatio => gen.noise_ratio = value,
        Axis::Beta => overrides.push(("beta".into(), value.to_string())),
    }
    let config = resolve_config(req.preset.as_deref(), req.config_file.as_deref(), &overrides)?;
    let data_dir = dir.join("data");
    let run_dir = dir.join("run");
    write_dataset(&data_dir, &gen)?;
    run_train(&TrainRequest {
        data_dir: data_dir.clone(),
        out_dir: run_dir.clone(),
        method: req.method,
        preset: req.preset.clone(),
        config,
    })?;
    let report = evaluate(&data_dir, &run_dir.join(MODEL_CKPT), &run_dir.join(LABELS_SNAP))?;
    let path = run_dir.join("eval.json");
    std::fs::write(&path, to_json(&report)).map_err(|e| CliError::io(&path, e))?;
    Ok(report)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn csv_field(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "'").replace('\n', " "))
}

/// Runs every (value, seed) pair; a failing pair is recorded and the sweep
/// continues.
pub fn run_sweep(req: &SweepRequest) -> Result<Vec<RunRow>, CliError> {
    std::fs::create_dir_all(&req.out).map_err(|e| CliError::io(&req.out, e))?;
    let mut rows = Vec::new();
    for &value in &req.values {
        for &seed in &req.seeds {
            let result = run_one(req, value, seed).map_err(|e| e.to_string());
            rows.push(RunRow {
                value,
                seed,
                result,
            });
        }
    }

    let mut runs = String::from("axis,value,seed,status,test_accuracy,label_recovery_rate,error\n");
    for r in &rows {
        let _ = match &r.result {
            Ok(rep) => writeln!(
                runs,
                "{},{},{},ok,{},{},",
                req.axis, r.value, r.seed, rep.test_accuracy, rep.label_recovery_rate
            ),
            Err(e) => writeln!(runs, "{},{},{},failed,,,{}", req.axis, r.value, r.seed, csv_field(e)),
        };
    }
    let mut cells = String::from(
        "axis,value,runs,ok,test_accuracy_mean,test_accuracy_sd,label_recovery_mean,label_recovery_sd\n",
    );
    for &value in &req.values {
        let ok: Vec<&EvalReport> = rows
            .iter()
            .filter(|r| r.value == value)
            .filter_map(|r| r.result.as_ref().ok())
            .collect();
        let acc: Vec<f64> = ok.iter().map(|r| r.test_accuracy).collect();
        let rec: Vec<f64> = ok.iter().map(|r| r.label_recovery_rate).collect();
        let (am, asd) = mean_sd(&acc);
        let (rm, rsd) = mean_sd(&rec);
        let _ = writeln!(
            cells,
            "{},{value},{},{},{am},{asd},{rm},{rsd}",
            req.axis,
            req.seeds.len(),
            ok.len()
        );
    }
    for (name, body) in [("runs.csv", runs), ("cells.csv", cells)] {
        let path = req.out.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sd() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn axis_names() {
        for a in [Axis::MetaFraction, Axis::NoiseRatio, Axis::Beta] {
            assert_eq!(a.to_string().parse::<Axis>().unwrap(), a);
        }
        assert!("gamma".parse::<Axis>().is_err());
    }
}
