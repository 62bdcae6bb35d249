//! Parameter-free layers and the fully connected layer.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_output.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("{:?}", input.shape()),
            format!("{:?}", grad_output.shape()),
        ));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Ok(Tensor::from_raw(input.shape().to_vec(), data))
}

fn pool_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() != 4 || shape[2] < 2 || shape[3] < 2 {
        return Err(Error::shape(op, "[N, C, H>=2, W>=2]", format!("{shape:?}")));
    }
    Ok((shape[0] * shape[1], shape[2], shape[3]))
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
pub fn maxpool_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (planes, h, w) = pool_dims("maxpool", input.shape())?;
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let plane = &src[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let (r0, r1) = (2 * y * w + 2 * x, (2 * y + 1) * w + 2 * x);
                out.push(plane[r0].max(plane[r0 + 1]).max(plane[r1]).max(plane[r1 + 1]));
            }
        }
    }
    let s = input.shape();
    Ok(Tensor::from_raw(vec![s[0], s[1], oh, ow], out))
}

/// Routes each output gradient to the first maximal element of its window.
pub fn maxpool_backward<T: Scalar>(input: &Tensor<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
    let (planes, h, w) = pool_dims("maxpool_backward", input.shape())?;
    let (oh, ow) = (h / 2, w / 2);
    let s = input.shape();
    if grad_output.shape() != [s[0], s[1], oh, ow] {
        return Err(Error::shape(
            "maxpool_backward",
            format!("{:?}", [s[0], s[1], oh, ow]),
            format!("{:?}", grad_output.shape()),
        ));
    }
    let src = input.data();
    let g = grad_output.data();
    let mut grad = vec![T::zero(); input.len()];
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let r0 = base + 2 * y * w + 2 * x;
                let r1 = base + (2 * y + 1) * w + 2 * x;
                let mut best = r0;
                for idx in [r0 + 1, r1, r1 + 1] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                grad[best] += g[(p * oh + y) * ow + x];
            }
        }
    }
    Ok(Tensor::from_raw(s.to_vec(), grad))
}

pub fn flatten_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let n = input.shape()[0];
    let rest = input.row_len();
    Tensor::from_raw(vec![n, rest], input.data().to_vec())
}

pub fn flatten_backward<T: Scalar>(input: &Tensor<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
    grad_output.clone().reshape(input.shape())
}

/// Fully connected layer, `weights` laid out as `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        let s = weights.shape();
        if s.len() != 2 || s[0] == 0 || s[1] == 0 {
            return Err(Error::shape("DenseLayer::new", "[out>=1, in>=1]", format!("{s:?}")));
        }
        if bias.len() != s[0] {
            return Err(Error::shape("DenseLayer::new", format!("bias of length {}", s[0]), bias.len()));
        }
        Ok(DenseLayer { weights, bias })
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn check_input(&self, op: &'static str, input: &Tensor<T>) -> Result<usize> {
        let s = input.shape();
        if s.len() != 2 || s[1] != self.inputs() {
            return Err(Error::shape(op, format!("[N, {}]", self.inputs()), format!("{s:?}")));
        }
        Ok(s[0])
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_input("dense", input)?;
        let out_dim = self.outputs();
        let mut out = Vec::with_capacity(n * out_dim);
        for s in 0..n {
            let x = input.row(s);
            for o in 0..out_dim {
                let mut acc = T::zero();
                for (&wv, &xv) in self.weights.row(o).iter().zip(x) {
                    acc += wv * xv;
                }
                out.push(acc + self.bias[o]);
            }
        }
        Ok(Tensor::from_raw(vec![n, out_dim], out))
    }

    pub fn backward(&self, input: &Tensor<T>, grad_output: &Tensor<T>) -> Result<(Tensor<T>, DenseGrads<T>)> {
        let n = self.check_input("dense_backward", input)?;
        let (out_dim, in_dim) = (self.outputs(), self.inputs());
        if grad_output.shape() != [n, out_dim] {
            return Err(Error::shape(
                "dense_backward",
                format!("[{n}, {out_dim}]"),
                format!("{:?}", grad_output.shape()),
            ));
        }
        let mut gw = vec![T::zero(); out_dim * in_dim];
        let mut gb = vec![T::zero(); out_dim];
        let mut gi = vec![T::zero(); n * in_dim];
        for s in 0..n {
            let x = input.row(s);
            let g = grad_output.row(s);
            let gi_s = &mut gi[s * in_dim..(s + 1) * in_dim];
            for o in 0..out_dim {
                let go = g[o];
                gb[o] += go;
                let wrow = self.weights.row(o);
                let gw_row = &mut gw[o * in_dim..(o + 1) * in_dim];
                for i in 0..in_dim {
                    gw_row[i] += go * x[i];
                    gi_s[i] += wrow[i] * go;
                }
            }
        }
        Ok((
            Tensor::from_raw(vec![n, in_dim], gi),
            DenseGrads {
                weights: Tensor::from_raw(vec![out_dim, in_dim], gw),
                bias: gb,
            },
        ))
    }
}
