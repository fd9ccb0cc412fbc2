//! Reader for IDX image/label files (the MNIST container format).
//!
//! Layout, all integers big-endian: a 4-byte magic `00 00 08 ndim` (`08` is
//! unsigned byte data), then `ndim` `u32` dimension sizes, then the raw bytes.
//! Image files have magic `0x00000803` (count, rows, cols); label files have
//! `0x00000801` (count).

use std::io::{self, Read};
use std::path::Path;

use thiserror::Error;

use crate::data::LabeledDataset;
use crate::linalg::DenseMatrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{file}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        file: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{file}: truncated (need {needed} bytes, have {have})")]
    Truncated {
        file: &'static str,
        needed: usize,
        have: usize,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

struct IdxArray<'a> {
    dims: Vec<usize>,
    data: &'a [u8],
}

fn parse<'a>(bytes: &'a [u8], expected: u32, file: &'static str) -> Result<IdxArray<'a>, IdxError> {
    let truncated = |needed| IdxError::Truncated {
        file,
        needed,
        have: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(4));
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
    if magic != expected {
        return Err(IdxError::BadMagic {
            file,
            found: magic,
            expected,
        });
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let body: usize = dims.iter().product();
    let needed = header + body;
    if bytes.len() < needed {
        return Err(truncated(needed));
    }
    Ok(IdxArray {
        dims,
        data: &bytes[header..needed],
    })
}

/// Pixels scaled to `[0, 1]` and flattened row-major, one sample per row.
/// The class count is `max(label) + 1`.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset, IdxError> {
    let img = parse(images, IMAGES_MAGIC, "images")?;
    let lab = parse(labels, LABELS_MAGIC, "labels")?;
    let (count, pixels) = (img.dims[0], img.dims[1] * img.dims[2]);
    if count != lab.dims[0] {
        return Err(IdxError::CountMismatch {
            images: count,
            labels: lab.dims[0],
        });
    }
    let features: Vec<f64> = img.data.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = lab.data.iter().map(|&b| usize::from(b)).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    let features = DenseMatrix::from_vec(count, pixels, features)
        .map_err(|e| IdxError::Invalid(e.to_string()))?;
    LabeledDataset::new(features, labels, classes).map_err(|e| IdxError::Invalid(e.to_string()))
}

pub fn load_idx_images(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset, IdxError> {
    let read = |p: &Path| -> Result<Vec<u8>, IdxError> {
        let mut buf = Vec::new();
        std::fs::File::open(p)?.read_to_end(&mut buf)?;
        Ok(buf)
    };
    parse_idx(&read(images_path)?, &read(labels_path)?)
}
