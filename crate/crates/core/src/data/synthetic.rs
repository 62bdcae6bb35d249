//! Seeded parametric image classes for desk-scale experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of distinct class patterns the generator knows.
pub const PATTERN_COUNT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub per_class: usize,
    /// Square image side.
    pub size: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Standard deviation of the additive pixel noise. It also sets the
    /// positional jitter: patterns shift by up to `floor(noise * size / 4)`
    /// pixels on each axis. Zero noise makes every image of a class identical.
    pub noise: f64,
    pub seed: u64,
}

fn default_channels() -> usize {
    1
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            classes: 5,
            per_class: 240,
            size: 12,
            channels: 1,
            noise: 0.35,
            seed: 7,
        }
    }
}

/// Intensity of class `class` at pixel `(y, x)` with the pattern centred at
/// `(cy, cx)`.
fn pattern(class: usize, y: f64, x: f64, cy: f64, cx: f64, size: f64) -> f64 {
    let (dy, dx) = (y - cy, x - cx);
    let half = size / 2.0;
    match class {
        // horizontal bar
        0 => f64::from(dy.abs() <= 1.0),
        // vertical bar
        1 => f64::from(dx.abs() <= 1.0),
        // main diagonal
        2 => f64::from((dy - dx).abs() <= 1.0),
        // anti-diagonal
        3 => f64::from((dy + dx).abs() <= 1.0),
        // filled blob
        4 => (-(dy * dy + dx * dx) / (0.12 * size * size)).exp(),
        // ring
        5 => {
            let r = (dy * dy + dx * dx).sqrt();
            f64::from((r - 0.3 * size).abs() <= 1.0)
        }
        // cross
        6 => f64::from(dy.abs() <= 0.5 || dx.abs() <= 0.5),
        // checkerboard with period 4
        _ => f64::from((((y + half) / 2.0).floor() as i64 + ((x + half) / 2.0).floor() as i64) % 2 == 0),
    }
}

/// Generates `classes * per_class` images in a seeded shuffled order.
pub fn gen_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    if config.classes == 0 || config.classes > PATTERN_COUNT {
        return Err(Error::Config(format!(
            "synthetic data supports 1..={PATTERN_COUNT} classes, got {}",
            config.classes
        )));
    }
    if config.size < 4 || config.channels == 0 {
        return Err(Error::Config("synthetic images need size >= 4 and at least one channel".into()));
    }
    if !(config.noise >= 0.0 && config.noise.is_finite()) {
        return Err(Error::Config(format!("noise amplitude {} must be nonnegative", config.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let size = config.size;
    let plane = size * size;
    let max_shift = (config.noise * size as f64 / 4.0).floor() as i64;
    let noise = Normal::new(0.0, config.noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let n = config.classes * config.per_class;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut data = Vec::with_capacity(n * config.channels * plane);
    let mut labels = Vec::with_capacity(n);
    let centre = (size as f64 - 1.0) / 2.0;
    for &slot in &order {
        let class = slot % config.classes;
        let (sy, sx) = if max_shift > 0 {
            (rng.random_range(-max_shift..=max_shift), rng.random_range(-max_shift..=max_shift))
        } else {
            (0, 0)
        };
        let (cy, cx) = (centre + sy as f64, centre + sx as f64);
        for _ in 0..config.channels {
            for y in 0..size {
                for x in 0..size {
                    let mut v = pattern(class, y as f64, x as f64, cy, cx, size as f64);
                    if config.noise > 0.0 {
                        v += noise.sample(&mut rng);
                    }
                    data.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
        labels.push(class);
    }
    let images = Tensor::from_vec(&[n, config.channels, size, size], data)?;
    Dataset::new(images, labels, config.classes)
}
