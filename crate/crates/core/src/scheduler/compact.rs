use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::FilterState;
use crate::nn::{ConvLayer, DenseLayer, Layer, Model};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactionStats {
    pub removed_filters: usize,
    pub params_before: usize,
    pub params_after: usize,
    pub macs_before: usize,
    pub macs_after: usize,
    /// Fraction of parameters removed.
    pub param_reduction: f64,
    /// Fraction of per-sample multiply-accumulates removed.
    pub mac_reduction: f64,
}

fn fraction_removed(before: usize, after: usize) -> f64 {
    if before == 0 {
        0.0
    } else {
        (before - after) as f64 / before as f64
    }
}

fn keep_rows<T: Scalar>(t: &Tensor<T>, rows: &[usize]) -> Tensor<T> {
    t.select_rows(rows)
}

/// Keeps only the given input channels of a conv layer.
fn keep_in_channels<T: Scalar>(conv: &ConvLayer<T>, keep: &[usize]) -> ConvLayer<T> {
    let (f, c, k) = (conv.filters(), conv.in_channels(), conv.kernel());
    let kk = k * k;
    let mut data = Vec::with_capacity(f * keep.len() * kk);
    for i in 0..f {
        let row = conv.filter(i);
        for &ch in keep {
            data.extend_from_slice(&row[ch * kk..(ch + 1) * kk]);
        }
    }
    debug_assert!(keep.iter().all(|&ch| ch < c));
    ConvLayer {
        weights: Tensor::from_raw(vec![f, keep.len(), k, k], data),
        bias: conv.bias.clone(),
        stride: conv.stride,
        padding: conv.padding,
    }
}

/// Keeps the dense-input columns fed by the given flattened channels.
fn keep_dense_columns<T: Scalar>(dense: &DenseLayer<T>, keep: &[usize], block: usize) -> DenseLayer<T> {
    let out = dense.outputs();
    let mut data = Vec::with_capacity(out * keep.len() * block);
    for o in 0..out {
        let row = dense.weights.row(o);
        for &ch in keep {
            data.extend_from_slice(&row[ch * block..(ch + 1) * block]);
        }
    }
    DenseLayer {
        weights: Tensor::from_raw(vec![out, keep.len() * block], data),
        bias: dense.bias.clone(),
    }
}

/// Physically removes pruned filters and the input channels (or dense
/// columns) that consumed them.
pub fn compact_model<T: Scalar>(model: &Model<T>) -> Result<(Model<T>, CompactionStats)> {
    let shapes = model.activation_shapes();
    let mut layers: Vec<Layer<T>> = model.layers().to_vec();
    let mut states: Vec<Vec<FilterState>> = Vec::with_capacity(model.conv_count());
    let mut removed = 0usize;
    for l in 0..model.conv_count() {
        let layer_states = &model.states()[l];
        let keep: Vec<usize> = (0..layer_states.len()).filter(|&i| !layer_states[i].is_pruned()).collect();
        if keep.is_empty() {
            return Err(Error::Starvation(format!("conv layer {l} has no unpruned filter to keep")));
        }
        removed += layer_states.len() - keep.len();
        states.push(keep.iter().map(|&i| layer_states[i]).collect());
        if keep.len() == layer_states.len() {
            continue;
        }
        let pos = model.conv_position(l);
        if let Layer::Conv(conv) = &layers[pos] {
            let weights = keep_rows(&conv.weights, &keep);
            let bias = keep.iter().map(|&i| conv.bias[i]).collect();
            layers[pos] = Layer::Conv(ConvLayer {
                weights,
                bias,
                stride: conv.stride,
                padding: conv.padding,
            });
        }
        // Find the consumer of these channels; spatial layers keep channel identity.
        let mut block = None;
        let mut consumer = None;
        for (p, layer) in layers.iter().enumerate().skip(pos + 1) {
            match layer {
                Layer::Conv(_) | Layer::Dense(_) => {
                    consumer = Some(p);
                    break;
                }
                Layer::Flatten => {
                    let s = &shapes[p];
                    block = Some(s[1] * s[2]);
                }
                Layer::Relu | Layer::MaxPool => {}
            }
        }
        let p = consumer.ok_or_else(|| Error::Internal("conv layer without a consumer".into()))?;
        layers[p] = match (&layers[p], block) {
            (Layer::Conv(next), None) => Layer::Conv(keep_in_channels(next, &keep)),
            (Layer::Dense(dense), Some(block)) => Layer::Dense(keep_dense_columns(dense, &keep, block)),
            _ => return Err(Error::Internal("unexpected layer between conv and its consumer".into())),
        };
    }
    let compacted = Model::with_states(model.input_shape(), layers, states)
        .map_err(|e| Error::Internal(format!("compacted model is inconsistent: {e}")))?;
    let (pb, pa) = (model.param_count(), compacted.param_count());
    let (mb, ma) = (model.mac_count(), compacted.mac_count());
    let stats = CompactionStats {
        removed_filters: removed,
        params_before: pb,
        params_after: pa,
        macs_before: mb,
        macs_after: ma,
        param_reduction: fraction_removed(pb, pa),
        mac_reduction: fraction_removed(mb, ma),
    };
    Ok((compacted, stats))
}
