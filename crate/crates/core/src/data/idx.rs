//! Reader for the IDX container used by the MNIST family of datasets.
//!
//! Layout: a big-endian `u32` magic (`0x0000 | type | ndims`), one
//! big-endian `u32` per dimension, then the raw payload.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use super::dataset::{Dataset, Normalization, Split};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn truncated(path: &Path, what: &str) -> Error {
    Error::io(
        path,
        std::io::Error::new(ErrorKind::UnexpectedEof, format!("file truncated while reading {what}")),
    )
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| truncated(path, what))
}

/// Parses an unsigned-byte IDX payload; returns `(dims, payload)`.
pub fn parse_idx<'a>(bytes: &'a [u8], expected_magic: u32, path: &Path) -> Result<(Vec<usize>, &'a [u8])> {
    let magic = be_u32(bytes, 0, path, "the magic number")?;
    if magic != expected_magic {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("bad magic number 0x{magic:08x}, expected 0x{expected_magic:08x}"),
        });
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        dims.push(be_u32(bytes, 4 + 4 * d, path, "the dimension header")? as usize);
    }
    let header = 4 + 4 * ndims;
    let len: usize = dims.iter().product();
    let payload = bytes.get(header..header + len).ok_or_else(|| truncated(path, "the payload"))?;
    Ok((dims, payload))
}

/// Loads an IDX image/label pair, scaling pixels to `[0, 1]` and then
/// applying `normalization`. The class count is `max(label) + 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split, normalization: Normalization) -> Result<Dataset> {
    normalization.validate()?;
    let image_bytes = read_file(images_path)?;
    let label_bytes = read_file(labels_path)?;
    let (idims, pixels) = parse_idx(&image_bytes, IMAGES_MAGIC, images_path)?;
    let (ldims, labels) = parse_idx(&label_bytes, LABELS_MAGIC, labels_path)?;
    if idims[0] != ldims[0] {
        return Err(Error::Consistency(format!(
            "{} holds {} images but {} holds {} labels",
            images_path.display(),
            idims[0],
            labels_path.display(),
            ldims[0]
        )));
    }
    let (n, h, w) = (idims[0], idims[1], idims[2]);
    let Normalization { mean, std } = normalization;
    let data = pixels.iter().map(|&p| (p as f32 / 255.0 - mean) / std).collect();
    let images = Tensor::new(vec![n, 1, h, w], data)?;
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(images, labels, num_classes.max(2), split, normalization)
}

/// Serializes unsigned-byte images `(N, H, W)` in IDX format.
pub fn encode_idx_images(n: usize, h: usize, w: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [n, h, w] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

/// Serializes labels in IDX format.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
