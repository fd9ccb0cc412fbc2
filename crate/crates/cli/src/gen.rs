//! Dataset generation: source, split, then noise on the training split.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mslg::data::{
    gen_blobs, gen_spirals, inject, split, DatasetBundle, NoiseKind, NoiseSpec, ProbeConfig,
};
use mslg::idx::load_idx_images;
use mslg::rng::{streams, Rng};

use crate::error::CliError;
use crate::kv::Manifest;

pub const DATASET_CSV: &str = "dataset.csv";
pub const DATASET_MANIFEST: &str = "dataset.manifest";
const FORMAT: &str = "mslg-dataset-1";

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Blobs {
        n: usize,
        classes: usize,
        dim: usize,
        separation: f64,
    },
    Spirals {
        n: usize,
        classes: usize,
        noise_sd: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

impl Source {
    /// From `key=value` options: blobs take `n c d sep`, spirals `n c noise`,
    /// idx `images labels`.
    pub fn blobs(opts: &Manifest) -> Result<Self, CliError> {
        Ok(Source::Blobs {
            n: opt(opts, "n", 2000)?,
            classes: opt(opts, "c", 4)?,
            dim: opt(opts, "d", 2)?,
            separation: opt(opts, "sep", 6.0)?,
        })
    }

    pub fn spirals(opts: &Manifest) -> Result<Self, CliError> {
        Ok(Source::Spirals {
            n: opt(opts, "n", 600)?,
            classes: opt(opts, "c", 3)?,
            noise_sd: opt(opts, "noise", 0.05)?,
        })
    }

    pub fn idx(opts: &Manifest) -> Result<Self, CliError> {
        Ok(Source::Idx {
            images: opts.require("images")?.into(),
            labels: opts.require("labels")?.into(),
        })
    }
}

fn opt<T: std::str::FromStr>(m: &Manifest, key: &str, default: T) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    match m.get(key) {
        None => Ok(default),
        Some(_) => m.parsed(key),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub source: Source,
    pub noise_kind: NoiseKind,
    pub noise_ratio: f64,
    pub meta_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub probe: ProbeConfig,
}

/// Parses `kind:ratio`, e.g. `feature_dependent:0.4`; a bare ratio means uniform.
pub fn parse_noise(s: &str) -> Result<(NoiseKind, f64), CliError> {
    let (kind, ratio) = match s.split_once(':') {
        Some((k, r)) => (k.parse().map_err(CliError::config)?, r),
        None => (NoiseKind::Uniform, s),
    };
    let ratio = ratio
        .parse()
        .map_err(|e| CliError::config(format!("noise ratio `{ratio}`: {e}")))?;
    Ok((kind, ratio))
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl GenSpec {
    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("format", FORMAT);
        match &self.source {
            Source::Blobs {
                n,
                classes,
                dim,
                separation,
            } => {
                m.set("source", "blobs");
                m.set("n", n);
                m.set("c", classes);
                m.set("d", dim);
                m.set("sep", separation);
            }
            Source::Spirals {
                n,
                classes,
                noise_sd,
            } => {
                m.set("source", "spirals");
                m.set("n", n);
                m.set("c", classes);
                m.set("noise_sd", noise_sd);
            }
            Source::Idx { images, labels } => {
                m.set("source", "idx");
                m.set("images", images.display());
                m.set("labels", labels.display());
            }
        }
        m.set("noise", format!("{}:{}", self.noise_kind, self.noise_ratio));
        m.set("meta_fraction", self.meta_fraction);
        m.set("test_fraction", self.test_fraction);
        m.set("seed", self.seed);
        m.set("probe_hidden", join(&self.probe.hidden));
        m.set("probe_epochs", self.probe.epochs);
        m.set("probe_lr", self.probe.lr);
        m.set("probe_momentum", self.probe.momentum);
        m.set("probe_batch_size", self.probe.batch_size);
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self, CliError> {
        if m.get("format") != Some(FORMAT) {
            return Err(CliError::config(format!(
                "dataset manifest format `{}`, expected `{FORMAT}`",
                m.get("format").unwrap_or("")
            )));
        }
        let source = match m.require("source")? {
            "blobs" => Source::Blobs {
                n: m.parsed("n")?,
                classes: m.parsed("c")?,
                dim: m.parsed("d")?,
                separation: m.parsed("sep")?,
            },
            "spirals" => Source::Spirals {
                n: m.parsed("n")?,
                classes: m.parsed("c")?,
                noise_sd: m.parsed("noise_sd")?,
            },
            "idx" => Source::Idx {
                images: m.require("images")?.into(),
                labels: m.require("labels")?.into(),
            },
            other => return Err(CliError::config(format!("unknown source `{other}`"))),
        };
        let (noise_kind, noise_ratio) = parse_noise(m.require("noise")?)?;
        let hidden = m.require("probe_hidden")?;
        let hidden = if hidden.is_empty() {
            Vec::new()
        } else {
            hidden
                .split(',')
                .map(|v| v.parse().map_err(|e| CliError::config(format!("probe_hidden: {e}"))))
                .collect::<Result<_, _>>()?
        };
        Ok(GenSpec {
            source,
            noise_kind,
            noise_ratio,
            meta_fraction: m.parsed("meta_fraction")?,
            test_fraction: m.parsed("test_fraction")?,
            seed: m.parsed("seed")?,
            probe: ProbeConfig {
                hidden,
                epochs: m.parsed("probe_epochs")?,
                lr: m.parsed("probe_lr")?,
                momentum: m.parsed("probe_momentum")?,
                batch_size: m.parsed("probe_batch_size")?,
            },
        })
    }

    /// Generates or loads the data, splits off clean meta and test parts and
    /// corrupts the training part.
    pub fn build(&self) -> Result<DatasetBundle, CliError> {
        let mut data_rng = Rng::with_stream(self.seed, streams::DATA_GEN);
        let ds = match &self.source {
            Source::Blobs {
                n,
                classes,
                dim,
                separation,
            } => gen_blobs(*n, *classes, *dim, *separation, &mut data_rng)?,
            Source::Spirals {
                n,
                classes,
                noise_sd,
            } => gen_spirals(*n, *classes, *noise_sd, &mut data_rng)?,
            Source::Idx { images, labels } => load_idx_images(images, labels)?,
        };
        let (train, meta, test) = split(
            &ds,
            self.meta_fraction,
            self.test_fraction,
            &mut Rng::with_stream(self.seed, streams::SPLIT),
        )?;
        let spec = NoiseSpec {
            kind: self.noise_kind,
            ratio: self.noise_ratio,
            seed: self.seed,
        };
        let (train, _) = inject(&train, &spec, &self.probe)?;
        Ok(DatasetBundle { train, meta, test })
    }
}

/// Writes `dataset.csv` and `dataset.manifest` into `dir`.
pub fn write_dataset(dir: &Path, spec: &GenSpec) -> Result<DatasetBundle, CliError> {
    let bundle = spec.build()?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let csv = dir.join(DATASET_CSV);
    let mut w = BufWriter::new(File::create(&csv).map_err(|e| CliError::io(&csv, e))?);
    bundle
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&csv, e))?;
    let mut m = spec.to_manifest();
    m.set("classes", bundle.classes());
    m.set("dim", bundle.dim());
    m.set("n_train", bundle.train.len());
    m.set("n_meta", bundle.meta.len());
    m.set("n_test", bundle.test.len());
    m.write(&dir.join(DATASET_MANIFEST), "dataset written by `mslg gen`")?;
    Ok(bundle)
}

pub fn load_dataset(dir: &Path) -> Result<(Manifest, DatasetBundle), CliError> {
    let m = Manifest::read(&dir.join(DATASET_MANIFEST))?;
    let classes: usize = m.parsed("classes")?;
    let csv = dir.join(DATASET_CSV);
    let f = File::open(&csv).map_err(|e| CliError::io(&csv, e))?;
    let bundle = DatasetBundle::read_csv(BufReader::new(f), classes)?;
    Ok((m, bundle))
}
