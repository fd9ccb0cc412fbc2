//! Training runs and their artifacts.
//!
//! A run directory holds `metrics.csv` (one row per epoch), `model.ckpt`,
//! `labels.snap`, `config.kv` (the resolved configuration, usable as
//! `--config`) and `run.manifest` (configuration, method, preset and the
//! dataset manifest). With `checkpoint_every = k > 0`,
//! `checkpoints/epoch-NNNN.{ckpt,snap}` are also written every `k` epochs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mslg::config::{preset, TrainConfig, PRESETS_VERSION};
use mslg::eval::Evaluator;
use mslg::trainer::{EpochMetrics, Method, Trainer};

use crate::error::CliError;
use crate::gen::load_dataset;
use crate::kv::Manifest;

pub const METRICS_CSV: &str = "metrics.csv";
pub const MODEL_CKPT: &str = "model.ckpt";
pub const LABELS_SNAP: &str = "labels.snap";
pub const CONFIG_KV: &str = "config.kv";
pub const RUN_MANIFEST: &str = "run.manifest";
const FORMAT: &str = "mslg-run-1";

/// Preset, then config file, then each `key=value` override in order.
pub fn resolve_config(
    preset_name: Option<&str>,
    config_file: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<TrainConfig, CliError> {
    let mut cfg = match preset_name {
        Some(name) => preset(name)?,
        None => TrainConfig::default(),
    };
    if let Some(path) = config_file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        cfg.apply_kv(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct TrainRequest {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub method: Method,
    pub preset: Option<String>,
    pub config: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub epochs: usize,
    pub last: Option<EpochMetrics>,
    pub skipped_label_rows: usize,
    pub aborted_label_batches: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn save_state(trainer: &Trainer, model: &Path, labels: &Path) -> Result<(), CliError> {
    trainer.model().save_checkpoint(model)?;
    trainer.store().save_snapshot(labels)?;
    Ok(())
}

pub fn run_train(req: &TrainRequest) -> Result<RunSummary, CliError> {
    let (data_manifest, bundle) = load_dataset(&req.data_dir)?;
    let out = &req.out_dir;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let cfg = &req.config;
    cfg.validate()?;
    let mut manifest = Manifest::new();
    manifest.set("format", FORMAT);
    manifest.set("method", req.method);
    manifest.set("data", req.data_dir.display());
    manifest.set("preset", req.preset.as_deref().unwrap_or(""));
    manifest.set("presets_version", PRESETS_VERSION);
    for (k, v) in cfg.to_kv().lines().filter_map(|l| l.split_once(" = ")) {
        manifest.set(&format!("config.{k}"), v);
    }
    for (k, v) in data_manifest.entries() {
        manifest.set(&format!("data.{k}"), v);
    }
    manifest.write(
        &out.join(RUN_MANIFEST),
        "reproduce with: mslg train --data <data> --method <method> --config config.kv",
    )?;
    let config_path = out.join(CONFIG_KV);
    std::fs::write(&config_path, cfg.to_kv()).map_err(|e| CliError::io(&config_path, e))?;

    let train = &bundle.train;
    let mut trainer = Trainer::new(cfg.clone(), train.training_data(), bundle.classes())?;
    let tagged = trainer.store().clone().with_sample_ids(train.ids().to_vec())?;
    trainer.set_store(tagged)?;
    let monitor = Evaluator {
        train,
        test: &bundle.test,
    };

    let metrics_path = out.join(METRICS_CSV);
    let mut metrics = create(&metrics_path)?;
    let io = |e| CliError::io(&metrics_path, e);
    writeln!(metrics, "{}", EpochMetrics::CSV_HEADER).map_err(io)?;
    let ckpt_dir = out.join("checkpoints");
    let model_path = out.join(MODEL_CKPT);
    let labels_path = out.join(LABELS_SNAP);

    let mut last_good = trainer.clone();
    let mut last = None;
    for _ in 0..cfg.total_epochs {
        let result = trainer.run_epoch(
            req.method,
            train.training_data(),
            bundle.meta.training_data(),
            &monitor,
        );
        let m = match result.map_err(CliError::from) {
            Ok(m) => m,
            Err(CliError::Numerical(msg)) => {
                metrics.flush().map_err(io)?;
                save_state(&last_good, &model_path, &labels_path)?;
                return Err(CliError::Numerical(format!(
                    "{msg}; kept state after epoch {}",
                    last_good.epoch()
                )));
            }
            Err(e) => return Err(e),
        };
        writeln!(metrics, "{}", m.csv_row()).map_err(io)?;
        let done = trainer.epoch();
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
            std::fs::create_dir_all(&ckpt_dir).map_err(|e| CliError::io(&ckpt_dir, e))?;
            save_state(
                &trainer,
                &ckpt_dir.join(format!("epoch-{done:04}.ckpt")),
                &ckpt_dir.join(format!("epoch-{done:04}.snap")),
            )?;
        }
        last_good = trainer.clone();
        last = Some(m);
    }
    metrics.flush().map_err(io)?;
    save_state(&trainer, &model_path, &labels_path)?;
    Ok(RunSummary {
        epochs: trainer.epoch(),
        last,
        skipped_label_rows: trainer.skipped_rows(),
        aborted_label_batches: trainer.aborted_batches(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_over_file_and_file_over_preset() {
        let dir = std::env::temp_dir().join(format!("mslg-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("c.kv");
        std::fs::write(&file, "beta = 7\nalpha = 0.25\n").unwrap();
        let cfg = resolve_config(
            Some("cifar10-featdep"),
            Some(&file),
            &[("alpha".into(), "0.125".into())],
        )
        .unwrap();
        assert_eq!((cfg.alpha, cfg.beta, cfg.k), (0.125, 7.0, 10.0));
        assert!(resolve_config(None, None, &[("alpha".into(), "-1".into())]).is_err());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn featdep_preset_resolves_image_scale_values() {
        let cfg = resolve_config(Some("cifar10-featdep"), None, &[]).unwrap();
        assert_eq!(
            (cfg.alpha, cfg.beta, cfg.k, cfg.momentum, cfg.weight_decay),
            (0.5, 4000.0, 10.0, 0.9, 1e-4)
        );
    }
}
