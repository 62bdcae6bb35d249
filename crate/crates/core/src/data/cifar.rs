use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::tensor::Tensor;

/// One label byte followed by a 3x32x32 channel-planar, row-major image.
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;

pub fn decode_cifar10(bytes: &[u8], path: &Path) -> Result<Dataset> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(Error::format(
            path,
            format!(
                "size {} is not a multiple of the {CIFAR_RECORD_LEN}-byte CIFAR-10 record",
                bytes.len()
            ),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD_LEN;
    if n == 0 {
        log::warn!("{}: empty CIFAR-10 batch", path.display());
    }
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * (CIFAR_RECORD_LEN - 1));
    for (i, record) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        if record[0] > 9 {
            return Err(Error::format(path, format!("record {i} has label {} > 9", record[0])));
        }
        labels.push(record[0] as usize);
        pixels.extend(record[1..].iter().map(|&b| b as f32 / 255.0));
    }
    let images = Tensor::from_vec(&[n, 3, 32, 32], pixels)?;
    Dataset::new(images, labels, 10)
}

pub fn load_cifar10_binary(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cifar10(&bytes, path)
}

/// Inverse of [`decode_cifar10`]; pixels are rounded back to bytes.
pub fn encode_cifar10(ds: &Dataset) -> Result<Vec<u8>> {
    if ds.sample_shape() != [3, 32, 32] || ds.class_count > 10 {
        return Err(Error::Data(format!(
            "CIFAR-10 records need 3x32x32 images and at most 10 classes, got {:?}",
            ds.sample_shape()
        )));
    }
    let mut out = Vec::with_capacity(ds.len() * CIFAR_RECORD_LEN);
    for (i, &label) in ds.labels.iter().enumerate() {
        out.push(label as u8);
        out.extend(ds.images.row(i).iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}

pub fn write_cifar10_binary(ds: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, &encode_cifar10(ds)?)
}
