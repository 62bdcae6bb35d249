//! Binary model checkpoints.
//!
//! All integers are little-endian `u32` unless noted; scalars use the native
//! little-endian encoding of the model's scalar type.
//!
//! ```text
//! magic        8 bytes  "ATPRCKPT"
//! version      u32      1
//! width        u8       4 (f32) or 8 (f64)
//! input shape  3 x u32  C, H, W
//! layer count  u32
//! layers       tag u8 then payload:
//!                0 conv:    filters, in_channels, kernel, stride, padding,
//!                           weights[filters*in*k*k], bias[filters]
//!                1 relu, 2 maxpool, 3 flatten: no payload
//!                4 dense:   outputs, inputs, weights[outputs*inputs], bias[outputs]
//! states       for each conv layer, for each filter:
//!                status u8 (0 active, 1 attenuated, 2 pruned),
//!                attenuation_count u32, recovery_count u32
//! ```
//!
//! Decoding then re-encoding reproduces the file byte for byte.

use std::path::Path;

use super::conv::ConvLayer;
use super::layers::DenseLayer;
use super::model::{Layer, Model};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::masking::{FilterState, FilterStatus};
use crate::tensor::{Scalar, Tensor};

const MAGIC: &[u8; 8] = b"ATPRCKPT";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn to_bytes<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::WIDTH);
    for d in model.input_shape() {
        put_u32(&mut out, d);
    }
    put_u32(&mut out, model.layers().len());
    for layer in model.layers() {
        match layer {
            Layer::Conv(c) => {
                out.push(0);
                for v in [c.filters(), c.in_channels(), c.kernel(), c.stride, c.padding] {
                    put_u32(&mut out, v);
                }
                c.weights.data().iter().for_each(|w| w.write_le(&mut out));
                c.bias.iter().for_each(|b| b.write_le(&mut out));
            }
            Layer::Relu => out.push(1),
            Layer::MaxPool => out.push(2),
            Layer::Flatten => out.push(3),
            Layer::Dense(d) => {
                out.push(4);
                put_u32(&mut out, d.outputs());
                put_u32(&mut out, d.inputs());
                d.weights.data().iter().for_each(|w| w.write_le(&mut out));
                d.bias.iter().for_each(|b| b.write_le(&mut out));
            }
        }
    }
    for state in model.states().iter().flatten() {
        out.push(state.status.code());
        put_u32(&mut out, state.attenuation_count as usize);
        put_u32(&mut out, state.recovery_count as usize);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.path, format!("truncated checkpoint at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn scalars<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let w = T::WIDTH as usize;
        let raw = self.take(n.checked_mul(w).ok_or_else(|| Error::format(self.path, "size overflow"))?)?;
        Ok(raw.chunks_exact(w).map(T::read_le).collect())
    }

    fn tensor<T: Scalar>(&mut self, shape: &[usize]) -> Result<Tensor<T>> {
        let data = self.scalars(shape.iter().product())?;
        Tensor::from_vec(shape, data).map_err(|e| Error::format(self.path, e.to_string()))
    }
}

pub fn from_bytes<T: Scalar>(bytes: &[u8], path: &Path) -> Result<Model<T>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let width = r.u8()?;
    if width != T::WIDTH {
        return Err(Error::format(
            path,
            format!("checkpoint stores {width}-byte scalars, expected {}", T::WIDTH),
        ));
    }
    let input_shape = [r.u32()?, r.u32()?, r.u32()?];
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    let mut conv_filters = Vec::new();
    for _ in 0..count {
        let layer = match r.u8()? {
            0 => {
                let (f, c, k, stride, padding) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
                let weights = r.tensor(&[f, c, k, k])?;
                let bias = r.scalars(f)?;
                conv_filters.push(f);
                Layer::Conv(ConvLayer::new(weights, bias, stride, padding).map_err(|e| Error::format(path, e.to_string()))?)
            }
            1 => Layer::Relu,
            2 => Layer::MaxPool,
            3 => Layer::Flatten,
            4 => {
                let (o, i) = (r.u32()?, r.u32()?);
                let weights = r.tensor(&[o, i])?;
                let bias = r.scalars(o)?;
                Layer::Dense(DenseLayer::new(weights, bias).map_err(|e| Error::format(path, e.to_string()))?)
            }
            tag => return Err(Error::format(path, format!("unknown layer tag {tag}"))),
        };
        layers.push(layer);
    }
    let mut states = Vec::with_capacity(conv_filters.len());
    for f in conv_filters {
        let mut layer_states = Vec::with_capacity(f);
        for _ in 0..f {
            let status = FilterStatus::from_code(r.u8()?)
                .ok_or_else(|| Error::format(path, "unknown filter status code"))?;
            layer_states.push(FilterState {
                status,
                attenuation_count: r.u32()? as u32,
                recovery_count: r.u32()? as u32,
            });
        }
        states.push(layer_states);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after checkpoint"));
    }
    Model::with_states(input_shape, layers, states).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(model))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}
