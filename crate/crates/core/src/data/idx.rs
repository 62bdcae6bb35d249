use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<usize> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()) as usize)
        .ok_or_else(|| Error::format(path, "truncated IDX header"))
}

/// Decodes an IDX image file (`u8`, 3 dimensions) and its label file.
/// Images become single-channel `[N, 1, rows, cols]`.
pub fn decode_idx(images: &[u8], labels: &[u8], images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let magic = be_u32(images, 0, images_path)?;
    if magic != IMAGES_MAGIC as usize {
        return Err(Error::format(images_path, format!("bad IDX image magic {magic:#010x}")));
    }
    let (n, rows, cols) = (
        be_u32(images, 4, images_path)?,
        be_u32(images, 8, images_path)?,
        be_u32(images, 12, images_path)?,
    );
    let pixels = &images[16..];
    let expected = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(images_path, "IDX dimensions overflow"))?;
    if pixels.len() != expected {
        return Err(Error::format(
            images_path,
            format!("expected {expected} pixel bytes for {n}x{rows}x{cols}, found {}", pixels.len()),
        ));
    }
    let magic = be_u32(labels, 0, labels_path)?;
    if magic != LABELS_MAGIC as usize {
        return Err(Error::format(labels_path, format!("bad IDX label magic {magic:#010x}")));
    }
    let n_labels = be_u32(labels, 4, labels_path)?;
    let label_bytes = &labels[8..];
    if label_bytes.len() != n_labels {
        return Err(Error::format(
            labels_path,
            format!("expected {n_labels} label bytes, found {}", label_bytes.len()),
        ));
    }
    if n_labels != n {
        return Err(Error::format(
            labels_path,
            format!("{n_labels} labels for {n} images"),
        ));
    }
    if n > 0 && (rows == 0 || cols == 0) {
        return Err(Error::format(images_path, "zero-sized IDX images"));
    }
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    let data = pixels.iter().map(|&b| b as f32 / 255.0).collect();
    let images = Tensor::from_vec(&[n, 1, rows.max(1), cols.max(1)], data)?;
    Dataset::new(images, labels, class_count)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    decode_idx(&images, &labels, images_path, labels_path)
}

/// Encodes a single-channel dataset as an (images, labels) IDX pair.
pub fn encode_idx(ds: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let [c, rows, cols] = ds.sample_shape();
    if c != 1 || ds.labels.iter().any(|&l| l > 255) {
        return Err(Error::Data("IDX encoding needs single-channel images and byte labels".into()));
    }
    let mut images = Vec::with_capacity(16 + ds.images.len());
    for v in [IMAGES_MAGIC, ds.len() as u32, rows as u32, cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(ds.images.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut labels = Vec::with_capacity(8 + ds.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    labels.extend(ds.labels.iter().map(|&l| l as u8));
    Ok((images, labels))
}

pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (images, labels) = encode_idx(ds)?;
    write_atomic(images_path, &images)?;
    write_atomic(labels_path, &labels)
}
