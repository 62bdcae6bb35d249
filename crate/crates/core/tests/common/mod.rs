//! Shared fixtures and independent oracles for the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

pub mod checks;
pub mod fixtures;
pub mod gradcheck;
pub mod runs;

use attenprune::criteria::ImportanceScores;
use attenprune::nn::{Layer, LayerSpec, Model};
use attenprune::data::{gen_synthetic, Dataset, SyntheticConfig};
use attenprune::{Criterion, Scalar, Tensor, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_tensor<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(StandardNormal.sample(rng)))
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Small random architecture: one or two conv blocks, optional pooling,
/// then flatten and dense.
pub fn random_specs(rng: &mut ChaCha8Rng) -> (Vec<LayerSpec>, [usize; 3]) {
    let channels = rng.random_range(1..=3);
    let size = rng.random_range(6..=9);
    let f1 = rng.random_range(2..=5);
    let f2 = rng.random_range(2..=5);
    let pool = rng.random_bool(0.5);
    let mut specs = vec![
        LayerSpec::Conv {
            filters: f1,
            kernel: 3,
            stride: 1,
            padding: 1,
        },
        LayerSpec::Relu,
    ];
    if pool {
        specs.push(LayerSpec::MaxPool);
    }
    specs.push(LayerSpec::Conv {
        filters: f2,
        kernel: if rng.random_bool(0.5) { 3 } else { 1 },
        stride: 1,
        padding: if rng.random_bool(0.5) { 1 } else { 0 },
    });
    specs.push(LayerSpec::Relu);
    specs.push(LayerSpec::Flatten);
    specs.push(LayerSpec::Dense {
        units: rng.random_range(2..=4),
    });
    (specs, [channels, size, size])
}

/// Random model with nonzero biases, so that a zeroed filter differs from an
/// untouched one.
pub fn random_model<T: Scalar>(seed: u64) -> Model<T> {
    let mut r = rng(seed);
    let (specs, shape) = random_specs(&mut r);
    let mut model = Model::<T>::build(shape, &specs, &mut r).unwrap();
    for i in 0..model.layers().len() {
        match model.layer_mut(i) {
            Layer::Conv(c) => c.bias.iter_mut().for_each(|b| *b = T::from_f64_lossy(r.random_range(-0.3..0.3))),
            Layer::Dense(d) => d.bias.iter_mut().for_each(|b| *b = T::from_f64_lossy(r.random_range(-0.3..0.3))),
            _ => {}
        }
    }
    model
}

pub fn random_input<T: Scalar>(model: &Model<T>, n: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let [c, h, w] = model.input_shape();
    normal_tensor(&[n, c, h, w], rng)
}

/// Norm-wise relative error between analytic and numeric gradients.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_gradient(x: &mut [f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + eps;
            let up = f(x);
            x[i] = orig - eps;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Brute-force three-valued mask: the mean runs over unpruned entries,
/// summed from the back, and both cuts are strict.
pub fn oracle_mask(scores: &[f64], pruned: &[bool], alpha: f64, beta: Option<f64>, fa: f64) -> Vec<f64> {
    let mut sum = 0.0;
    let mut count = 0.0;
    for i in (0..scores.len()).rev() {
        if !pruned[i] {
            sum += scores[i];
            count += 1.0;
        }
    }
    let mean = sum / count;
    scores
        .iter()
        .zip(pruned)
        .map(|(&s, &p)| {
            if p {
                return 0.0;
            }
            match beta {
                None => {
                    if s < alpha * mean {
                        0.0
                    } else {
                        1.0
                    }
                }
                Some(b) => {
                    if s < b * mean {
                        0.0
                    } else if s < alpha * mean {
                        fa
                    } else {
                        1.0
                    }
                }
            }
        })
        .collect()
}

pub struct MaskCase {
    pub scores: ImportanceScores,
    pub pruned: Vec<bool>,
    pub alpha: f64,
    pub beta: f64,
}

/// Random score vectors. Every other case is built from small integers so
/// that the unpruned mean is exact and some scores sit exactly on
/// `alpha * mean` and `beta * mean`.
pub fn mask_case(seed: u64) -> MaskCase {
    let mut r = rng(seed);
    if seed.is_multiple_of(2) {
        let n = r.random_range(1..=20);
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0.0..3.0)).collect();
        let mut pruned: Vec<bool> = (0..n).map(|_| r.random_bool(0.2)).collect();
        let keep = r.random_range(0..n);
        pruned[keep] = false;
        let alpha = r.random_range(0.0..1.5);
        let beta = alpha * r.random_range(0.0..1.0);
        return MaskCase {
            scores: ImportanceScores::new(Criterion::L1, scores),
            pruned,
            alpha,
            beta,
        };
    }
    let live = [4usize, 8, 16][r.random_range(0..3)];
    let mean = 8.0 * r.random_range(1..=8) as f64;
    let (alpha, beta) = [(0.5, 0.25), (1.0, 0.5), (0.75, 0.25), (0.5, 0.5)][r.random_range(0..4)];
    let mut live_scores = vec![alpha * mean, beta * mean];
    let mut rest = mean * live as f64 - live_scores.iter().sum::<f64>();
    for i in 2..live {
        let v = if i + 1 == live { rest } else { r.random_range(0..=(rest as u64)) as f64 };
        live_scores.push(v);
        rest -= v;
    }
    let mut scores = Vec::new();
    let mut pruned = Vec::new();
    for v in live_scores {
        scores.push(v);
        pruned.push(false);
        if r.random_bool(0.3) {
            scores.push(r.random_range(0.0..100.0));
            pruned.push(true);
        }
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, r.random_range(0..=i));
    }
    MaskCase {
        scores: ImportanceScores::new(Criterion::L1, order.iter().map(|&i| scores[i]).collect()),
        pruned: order.iter().map(|&i| pruned[i]).collect(),
        alpha,
        beta,
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Parameter count of the compacted architecture, computed from the filter
/// states alone.
pub fn expected_compact_params<T: Scalar>(model: &Model<T>) -> usize {
    let remaining = model.remaining_per_layer();
    let shapes = model.activation_shapes();
    let mut total = 0;
    let mut channels = model.input_shape()[0];
    let mut conv_i = 0;
    for (i, layer) in model.layers().iter().enumerate() {
        match layer {
            Layer::Conv(c) => {
                let f = remaining[conv_i];
                total += f * (channels * c.kernel() * c.kernel() + 1);
                channels = f;
                conv_i += 1;
            }
            Layer::Dense(d) => {
                let input = &shapes[i];
                let inputs = if input.len() == 1 { input[0] } else { input.iter().product() };
                let per_channel_inputs = if conv_i > 0 && i > 0 && matches!(model.layers()[i - 1], Layer::Flatten) {
                    let pre = &shapes[i - 1];
                    channels * pre[1] * pre[2]
                } else {
                    inputs
                };
                total += d.outputs() * (per_channel_inputs + 1);
                channels = d.outputs();
            }
            _ => {}
        }
    }
    total
}

/// Three-class 8x8 problem small enough for many full schedule runs.
pub struct SmallSetup {
    pub model: Model<f32>,
    pub train: Dataset,
    pub val: Dataset,
    pub train_config: TrainConfig,
}

pub fn small_setup(seed: u64, noise: f64) -> SmallSetup {
    let data = gen_synthetic(&SyntheticConfig {
        classes: 3,
        per_class: 60,
        size: 8,
        channels: 1,
        noise,
        seed,
    })
    .unwrap();
    let (train, val, _) = data.partition().unwrap();
    let specs = [
        LayerSpec::Conv {
            filters: 4,
            kernel: 3,
            stride: 1,
            padding: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool,
        LayerSpec::Conv {
            filters: 6,
            kernel: 3,
            stride: 1,
            padding: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool,
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 3 },
    ];
    let model = Model::build([1, 8, 8], &specs, &mut rng(seed)).unwrap();
    SmallSetup {
        model,
        train,
        val,
        train_config: TrainConfig {
            learning_rate: 0.1,
            batch_size: 16,
            epochs: 3,
            rng_seed: seed,
        },
    }
}
