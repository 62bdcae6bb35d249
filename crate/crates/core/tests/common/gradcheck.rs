//! Finite-difference gradient checks in f64. Each case returns the worst
//! norm-wise relative error over the gradients it checks.
#![allow(dead_code)]

use attenprune::nn::layers::{maxpool_backward, maxpool_forward, relu_backward, relu_forward};
use attenprune::nn::{
    batch_softmax_xent, conv2d_backward, conv2d_forward, ConvLayer, DenseLayer, Layer, LayerGrads, Model,
};
use attenprune::Tensor;
use rand::Rng;

use super::{normal_tensor, numeric_gradient, random_model, relative_error, rng};

pub const EPS: f64 = 1e-6;

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn conv_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, c, f) = (2, r.random_range(1..=3), r.random_range(1..=4));
    let k = r.random_range(1..=3);
    let stride = r.random_range(1..=2);
    let padding = r.random_range(0..=1);
    let h = r.random_range(k.max(3)..=7);
    let w = r.random_range(k.max(3)..=7);
    let x = normal_tensor::<f64>(&[n, c, h, w], &mut r);
    let layer = ConvLayer::new(normal_tensor(&[f, c, k, k], &mut r), normal_tensor::<f64>(&[f], &mut r).into_data(), stride, padding).unwrap();
    let out = conv2d_forward(&x, &layer).unwrap();
    let probe = normal_tensor::<f64>(out.shape(), &mut r);
    let (gx, grads) = conv2d_backward(&x, &layer, &probe).unwrap();
    let loss = |x: &Tensor<f64>, l: &ConvLayer<f64>| dot(&conv2d_forward(x, l).unwrap(), &probe);

    let mut xs = x.data().to_vec();
    let nx = numeric_gradient(&mut xs, EPS, |v| loss(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &layer));
    let mut ws = layer.weights.data().to_vec();
    let nw = numeric_gradient(&mut ws, EPS, |v| {
        let mut l = layer.clone();
        l.weights.data_mut().copy_from_slice(v);
        loss(&x, &l)
    });
    let mut bs = layer.bias.clone();
    let nb = numeric_gradient(&mut bs, EPS, |v| {
        let mut l = layer.clone();
        l.bias.copy_from_slice(v);
        loss(&x, &l)
    });
    relative_error(gx.data(), &nx)
        .max(relative_error(grads.weights.data(), &nw))
        .max(relative_error(&grads.bias, &nb))
}

pub fn dense_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, i, o) = (r.random_range(1..=4), r.random_range(1..=12), r.random_range(1..=6));
    let x = normal_tensor::<f64>(&[n, i], &mut r);
    let layer = DenseLayer::new(normal_tensor(&[o, i], &mut r), normal_tensor::<f64>(&[o], &mut r).into_data()).unwrap();
    let probe = normal_tensor::<f64>(&[n, o], &mut r);
    let (gx, grads) = layer.backward(&x, &probe).unwrap();
    let loss = |x: &Tensor<f64>, l: &DenseLayer<f64>| dot(&l.forward(x).unwrap(), &probe);
    let mut xs = x.data().to_vec();
    let nx = numeric_gradient(&mut xs, EPS, |v| loss(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), &layer));
    let mut ws = layer.weights.data().to_vec();
    let nw = numeric_gradient(&mut ws, EPS, |v| {
        let mut l = layer.clone();
        l.weights.data_mut().copy_from_slice(v);
        loss(&x, &l)
    });
    let mut bs = layer.bias.clone();
    let nb = numeric_gradient(&mut bs, EPS, |v| {
        let mut l = layer.clone();
        l.bias.copy_from_slice(v);
        loss(&x, &l)
    });
    relative_error(gx.data(), &nx)
        .max(relative_error(grads.weights.data(), &nw))
        .max(relative_error(&grads.bias, &nb))
}

/// Inputs kept at least 0.05 away from the kink.
pub fn relu_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let shape = [2, r.random_range(1..=3), 4, 5];
    let x = normal_tensor::<f64>(&shape, &mut r).map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v });
    let probe = normal_tensor::<f64>(&shape, &mut r);
    let gx = relu_backward(&x, &probe).unwrap();
    let mut xs = x.data().to_vec();
    let nx = numeric_gradient(&mut xs, EPS, |v| dot(&relu_forward(&Tensor::from_vec(&shape, v.to_vec()).unwrap()), &probe));
    relative_error(gx.data(), &nx)
}

/// Distinct window values (gaps of at least 0.01) so the routing is stable
/// under the perturbation; odd sizes exercise the dropped edge.
pub fn pool_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let shape = [2, r.random_range(1..=3), r.random_range(2..=7), r.random_range(2..=7)];
    let len: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..len).map(|i| i as f64 * 0.01).collect();
    for i in (1..len).rev() {
        values.swap(i, r.random_range(0..=i));
    }
    let x = Tensor::from_vec(&shape, values).unwrap();
    let out = maxpool_forward(&x).unwrap();
    let probe = normal_tensor::<f64>(out.shape(), &mut r);
    let gx = maxpool_backward(&x, &probe).unwrap();
    let mut xs = x.data().to_vec();
    let nx = numeric_gradient(&mut xs, EPS, |v| {
        dot(&maxpool_forward(&Tensor::from_vec(&shape, v.to_vec()).unwrap()).unwrap(), &probe)
    });
    relative_error(gx.data(), &nx)
}

pub fn softmax_xent_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, c) = (r.random_range(1..=5), r.random_range(2..=7));
    let logits = normal_tensor::<f64>(&[n, c], &mut r).scale(3.0);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let (_, g) = batch_softmax_xent(&logits, &labels).unwrap();
    let mut xs = logits.data().to_vec();
    let nx = numeric_gradient(&mut xs, EPS, |v| {
        batch_softmax_xent(&Tensor::from_vec(&[n, c], v.to_vec()).unwrap(), &labels).unwrap().0
    });
    relative_error(g.data(), &nx)
}

/// ReLU signs and 2x2 window argmaxes over a forward pass.
fn activation_pattern(model: &Model<f64>, x: &Tensor<f64>) -> Vec<usize> {
    let acts = model.forward_cached(x).unwrap();
    let mut pattern = Vec::new();
    for (i, layer) in model.layers().iter().enumerate() {
        let input = &acts[i];
        match layer {
            Layer::Relu => pattern.extend(input.data().iter().map(|&v| (v > 0.0) as usize)),
            Layer::MaxPool => {
                let s = input.shape();
                let (h, w) = (s[2], s[3]);
                for plane in input.data().chunks(h * w) {
                    for oy in 0..h / 2 {
                        for ox in 0..w / 2 {
                            let cells = [(0, 0), (0, 1), (1, 0), (1, 1)];
                            let best = (0..4)
                                .max_by(|&a, &b| {
                                    let va = plane[(2 * oy + cells[a].0) * w + 2 * ox + cells[a].1];
                                    let vb = plane[(2 * oy + cells[b].0) * w + 2 * ox + cells[b].1];
                                    va.total_cmp(&vb).then(b.cmp(&a))
                                })
                                .unwrap();
                            pattern.push(best);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    pattern
}

/// Adds `delta` to entry `j` of parameter block `block` (weights, bias per
/// conv or dense layer, in layer order).
fn perturb(model: &mut Model<f64>, block: usize, j: usize, delta: f64) {
    let mut seen = 0;
    for i in 0..model.layers().len() {
        let (w, b) = match model.layer_mut(i) {
            Layer::Conv(c) => (c.weights.data_mut(), &mut c.bias[..]),
            Layer::Dense(d) => (d.weights.data_mut(), &mut d.bias[..]),
            _ => continue,
        };
        if block == seen {
            w[j] += delta;
            return;
        }
        if block == seen + 1 {
            b[j] += delta;
            return;
        }
        seen += 2;
    }
    panic!("no parameter block {block}");
}

/// Whole random model, softmax cross-entropy loss. Coordinates whose
/// perturbation flips a ReLU sign or a pooling argmax are not
/// differentiable there and are skipped. Returns `(error, skipped)`.
pub fn model_case(seed: u64) -> (f64, usize) {
    let mut r = rng(seed ^ 0x5eed);
    let model: Model<f64> = random_model(seed);
    let x = super::random_input(&model, 3, &mut r);
    let labels: Vec<usize> = (0..3).map(|_| r.random_range(0..model.classes())).collect();
    let loss = |m: &Model<f64>, x: &Tensor<f64>| batch_softmax_xent(&m.forward(x).unwrap(), &labels).unwrap().0;
    let acts = model.forward_cached(&x).unwrap();
    let (_, g_logits) = batch_softmax_xent(acts.last().unwrap(), &labels).unwrap();
    let (gx, grads) = model.backward(&acts, &g_logits).unwrap();
    let mut analytic: Vec<Vec<f64>> = Vec::new();
    for g in &grads.layers {
        match g {
            LayerGrads::Conv(c) => {
                analytic.push(c.weights.data().to_vec());
                analytic.push(c.bias.clone());
            }
            LayerGrads::Dense(d) => {
                analytic.push(d.weights.data().to_vec());
                analytic.push(d.bias.clone());
            }
            LayerGrads::None => {}
        }
    }
    analytic.push(gx.data().to_vec());
    let base_pattern = activation_pattern(&model, &x);
    let mut skipped = 0;
    let mut worst: f64 = 0.0;
    let block_count = analytic.len();
    for (b, block) in analytic.iter().enumerate() {
        let mut a_kept = Vec::new();
        let mut n_kept = Vec::new();
        for (j, &analytic_j) in block.iter().enumerate() {
            let eval = |delta: f64| -> (f64, bool) {
                let mut m = model.clone();
                let mut xi = x.clone();
                if b + 1 == block_count {
                    xi.data_mut()[j] += delta;
                } else {
                    perturb(&mut m, b, j, delta);
                }
                (loss(&m, &xi), activation_pattern(&m, &xi) == base_pattern)
            };
            let (up, same_up) = eval(EPS);
            let (down, same_down) = eval(-EPS);
            if !(same_up && same_down) {
                skipped += 1;
                continue;
            }
            a_kept.push(analytic_j);
            n_kept.push((up - down) / (2.0 * EPS));
        }
        worst = worst.max(relative_error(&a_kept, &n_kept));
    }
    (worst, skipped)
}
