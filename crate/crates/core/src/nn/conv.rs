//! 2-D convolution over `[N, C, H, W]` batches via per-sample im2col.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// A bank of convolution filters with layout `[out, in, K, K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Vec<T>, stride: usize, padding: usize) -> Result<Self> {
        let s = weights.shape();
        if s.len() != 4 || s[0] == 0 || s[1] == 0 || s[2] == 0 || s[2] != s[3] {
            return Err(Error::shape("ConvLayer::new", "[out>=1, in>=1, K>=1, K]", format!("{s:?}")));
        }
        if bias.len() != s[0] {
            return Err(Error::shape("ConvLayer::new", format!("bias of length {}", s[0]), bias.len()));
        }
        if stride == 0 {
            return Err(Error::Config("convolution stride must be positive".into()));
        }
        Ok(ConvLayer {
            weights,
            bias,
            stride,
            padding,
        })
    }

    pub fn zeros(filters: usize, in_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvLayer {
            weights: Tensor::zeros(&[filters, in_channels, kernel, kernel]),
            bias: vec![T::zero(); filters],
            stride,
            padding,
        }
    }

    pub fn filters(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[2]
    }

    /// Weights of filter `i`, all input channels, flattened.
    pub fn filter(&self, i: usize) -> &[T] {
        self.weights.row(i)
    }

    pub fn filter_mut(&mut self, i: usize) -> &mut [T] {
        self.weights.row_mut(i)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Output spatial size with zero padding and floor division.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel();
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < k || pw < k {
            return Err(Error::shape(
                "conv2d",
                format!("padded input at least {k}x{k}"),
                format!("{ph}x{pw}"),
            ));
        }
        Ok(((ph - k) / self.stride + 1, (pw - k) / self.stride + 1))
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize)> {
        let s = input.shape();
        if s.len() != 4 || s[1] != self.in_channels() {
            return Err(Error::shape(
                "conv2d",
                format!("[N, {}, H, W]", self.in_channels()),
                format!("{s:?}"),
            ));
        }
        let (oh, ow) = self.output_hw(s[2], s[3])?;
        Ok((s[0], s[2], s[3], oh, ow))
    }

    /// Fills `col` (shape `[C*K*K, OH*OW]`) from one `[C, H, W]` sample.
    fn im2col(&self, sample: &[T], h: usize, w: usize, oh: usize, ow: usize, col: &mut [T]) {
        let (c_in, k) = (self.in_channels(), self.kernel());
        let (stride, pad) = (self.stride as isize, self.padding as isize);
        let plane = oh * ow;
        for c in 0..c_in {
            let src = &sample[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let q = (c * k + ki) * k + kj;
                    let row = &mut col[q * plane..(q + 1) * plane];
                    for y in 0..oh {
                        let iy = y as isize * stride + ki as isize - pad;
                        let dst = &mut row[y * ow..(y + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                        for (x, d) in dst.iter_mut().enumerate() {
                            let ix = x as isize * stride + kj as isize - pad;
                            *d = if ix < 0 || ix >= w as isize {
                                T::zero()
                            } else {
                                src_row[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds `col` back into a `[C, H, W]` gradient sample.
    fn col2im(&self, col: &[T], h: usize, w: usize, oh: usize, ow: usize, sample: &mut [T]) {
        let (c_in, k) = (self.in_channels(), self.kernel());
        let (stride, pad) = (self.stride as isize, self.padding as isize);
        let plane = oh * ow;
        for c in 0..c_in {
            let dst = &mut sample[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let q = (c * k + ki) * k + kj;
                    let row = &col[q * plane..(q + 1) * plane];
                    for y in 0..oh {
                        let iy = y as isize * stride + ki as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for x in 0..ow {
                            let ix = x as isize * stride + kj as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                dst[iy as usize * w + ix as usize] += row[y * ow + x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Computes `out_i = sum_j input_j (*) weights_{i,j} + bias_i` for every
/// filter `i` and sample.
///
/// Each output channel depends only on its own filter row, so modifying one
/// filter never perturbs the other channels.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    let (n, h, w, oh, ow) = layer.check_input(input)?;
    let f_out = layer.filters();
    let q_len = layer.in_channels() * layer.kernel() * layer.kernel();
    let plane = oh * ow;
    let mut out = vec![T::zero(); n * f_out * plane];
    let mut col = vec![T::zero(); q_len * plane];
    for s in 0..n {
        layer.im2col(input.row(s), h, w, oh, ow, &mut col);
        let out_s = &mut out[s * f_out * plane..(s + 1) * f_out * plane];
        for f in 0..f_out {
            let acc = &mut out_s[f * plane..(f + 1) * plane];
            let wrow = layer.filter(f);
            for (q, &wq) in wrow.iter().enumerate() {
                if wq == T::zero() {
                    continue;
                }
                let crow = &col[q * plane..(q + 1) * plane];
                for (a, &c) in acc.iter_mut().zip(crow) {
                    *a += wq * c;
                }
            }
            let b = layer.bias[f];
            for a in acc.iter_mut() {
                *a += b;
            }
        }
    }
    Ok(Tensor::from_raw(vec![n, f_out, oh, ow], out))
}

/// Gradients of a scalar loss with respect to the input, weights and bias,
/// given the loss gradient at the convolution output.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    grad_output: &Tensor<T>,
) -> Result<(Tensor<T>, ConvGrads<T>)> {
    let (n, h, w, oh, ow) = layer.check_input(input)?;
    let f_out = layer.filters();
    if grad_output.shape() != [n, f_out, oh, ow] {
        return Err(Error::shape(
            "conv2d_backward",
            format!("{:?}", [n, f_out, oh, ow]),
            format!("{:?}", grad_output.shape()),
        ));
    }
    let q_len = layer.in_channels() * layer.kernel() * layer.kernel();
    let plane = oh * ow;
    let mut grad_w = vec![T::zero(); f_out * q_len];
    let mut grad_b = vec![T::zero(); f_out];
    let mut grad_in = vec![T::zero(); input.len()];
    let mut col = vec![T::zero(); q_len * plane];
    let mut dcol = vec![T::zero(); q_len * plane];
    for s in 0..n {
        layer.im2col(input.row(s), h, w, oh, ow, &mut col);
        dcol.fill(T::zero());
        let g_s = grad_output.row(s);
        for f in 0..f_out {
            let g = &g_s[f * plane..(f + 1) * plane];
            grad_b[f] += g.iter().copied().sum::<T>();
            let wrow = layer.filter(f);
            let gw = &mut grad_w[f * q_len..(f + 1) * q_len];
            for q in 0..q_len {
                let crow = &col[q * plane..(q + 1) * plane];
                let mut dot = T::zero();
                for (&a, &b) in g.iter().zip(crow) {
                    dot += a * b;
                }
                gw[q] += dot;
                let wq = wrow[q];
                if wq != T::zero() {
                    let drow = &mut dcol[q * plane..(q + 1) * plane];
                    for (d, &gv) in drow.iter_mut().zip(g) {
                        *d += wq * gv;
                    }
                }
            }
        }
        let sample_len = input.row_len();
        layer.col2im(&dcol, h, w, oh, ow, &mut grad_in[s * sample_len..(s + 1) * sample_len]);
    }
    Ok((
        Tensor::from_raw(input.shape().to_vec(), grad_in),
        ConvGrads {
            weights: Tensor::from_raw(layer.weights.shape().to_vec(), grad_w),
            bias: grad_b,
        },
    ))
}
