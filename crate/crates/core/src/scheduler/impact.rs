//! How much a set of filters contributes to the next conv layer's
//! pre-activations. A diagnostic only; selection never uses it.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::masking::FilterRef;
use crate::nn::{conv2d_forward, ConvLayer, Layer, Model};
use crate::tensor::{Scalar, Tensor};

/// Filters of a single conv layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    layer: usize,
    filters: BTreeSet<usize>,
}

impl CandidateSet {
    pub fn new(layer: usize, filters: impl IntoIterator<Item = usize>) -> Self {
        CandidateSet {
            layer,
            filters: filters.into_iter().collect(),
        }
    }

    /// Fails unless every reference belongs to the same layer.
    pub fn from_refs(refs: &[FilterRef]) -> Result<Self> {
        let Some(first) = refs.first() else {
            return Err(Error::Data("candidate set needs at least one filter to infer its layer".into()));
        };
        if refs.iter().any(|r| r.layer != first.layer) {
            return Err(Error::Data("candidate filters must all belong to one layer".into()));
        }
        Ok(Self::new(first.layer, refs.iter().map(|r| r.filter)))
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn filters(&self) -> &BTreeSet<usize> {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }
}

/// Sum of absolute values, averaged over the probe batch, of the candidate
/// feature maps convolved through the matching input channels of the next
/// conv layer (bias excluded).
pub fn next_layer_impact<T: Scalar>(
    model: &Model<T>,
    layer: usize,
    candidates: &CandidateSet,
    probe: &Tensor<T>,
) -> Result<f64> {
    if candidates.layer != layer {
        return Err(Error::Data(format!(
            "candidate set belongs to layer {}, not {layer}",
            candidates.layer
        )));
    }
    if layer + 1 >= model.conv_count() {
        return Err(Error::Data(format!("conv layer {layer} has no following conv layer")));
    }
    let f_out = model.conv(layer).filters();
    if let Some(&f) = candidates.filters.iter().find(|&&f| f >= f_out) {
        return Err(Error::UnknownFilter(FilterRef::new(layer, f)));
    }
    let n = probe.shape().first().copied().unwrap_or(0);
    if n == 0 {
        return Err(Error::Data("probe batch is empty".into()));
    }
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let next_pos = model.conv_position(layer + 1);
    if model.layers()[model.conv_position(layer) + 1..next_pos]
        .iter()
        .any(|l| matches!(l, Layer::Dense(_) | Layer::Flatten))
    {
        return Err(Error::Data("no channel path between the two conv layers".into()));
    }
    let features = model.forward_prefix(probe, next_pos)?;
    let next = model.conv(layer + 1);
    let kk = next.kernel() * next.kernel();
    let mut restricted = ConvLayer::zeros(next.filters(), next.in_channels(), next.kernel(), next.stride, next.padding);
    for i in 0..next.filters() {
        let src = next.filter(i);
        let dst = restricted.filter_mut(i);
        for &j in &candidates.filters {
            dst[j * kk..(j + 1) * kk].copy_from_slice(&src[j * kk..(j + 1) * kk]);
        }
    }
    let contribution = conv2d_forward(&features, &restricted)?;
    let total: f64 = contribution.data().iter().map(|v| v.as_f64().abs()).sum();
    Ok(total / n as f64)
}
