use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvLayer};
use super::layers::{
    flatten_backward, flatten_forward, maxpool_backward, maxpool_forward, relu_backward, relu_forward, DenseGrads,
    DenseLayer,
};
use crate::error::{Error, Result};
use crate::masking::{FilterRef, FilterState, PruneSnapshot};
use crate::tensor::{Scalar, Tensor};

/// Architecture entry as written in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Relu,
    MaxPool,
    Flatten,
    Dense {
        units: usize,
    },
}

fn one() -> usize {
    1
}

impl LayerSpec {
    /// Stride-1 convolution with no padding.
    pub fn conv(filters: usize, kernel: usize) -> Self {
        LayerSpec::Conv {
            filters,
            kernel,
            stride: 1,
            padding: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(ConvLayer<T>),
    Relu,
    MaxPool,
    Flatten,
    Dense(DenseLayer<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Relu => "relu",
            Layer::MaxPool => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv(c) => {
                if input.len() != 3 || input[0] != c.in_channels() {
                    return Err(Error::shape(
                        "model",
                        format!("[{}, H, W] into conv", c.in_channels()),
                        format!("{input:?}"),
                    ));
                }
                let (oh, ow) = c.output_hw(input[1], input[2])?;
                Ok(vec![c.filters(), oh, ow])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool => {
                if input.len() != 3 || input[1] < 2 || input[2] < 2 {
                    return Err(Error::shape("model", "[C, H>=2, W>=2] into maxpool", format!("{input:?}")));
                }
                Ok(vec![input[0], input[1] / 2, input[2] / 2])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense(d) => {
                if input.len() != 1 || input[0] != d.inputs() {
                    return Err(Error::shape(
                        "model",
                        format!("[{}] into dense", d.inputs()),
                        format!("{input:?}"),
                    ));
                }
                Ok(vec![d.outputs()])
            }
        }
    }

    fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(c) => conv2d_forward(input, c),
            Layer::Relu => Ok(relu_forward(input)),
            Layer::MaxPool => maxpool_forward(input),
            Layer::Flatten => Ok(flatten_forward(input)),
            Layer::Dense(d) => d.forward(input),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrads<T> {
    None,
    Conv(ConvGrads<T>),
    Dense(DenseGrads<T>),
}

/// Parameter gradients for every layer, aligned with `Model::layers`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrads<T>>,
}

/// A sequential CNN ending in logits; softmax cross-entropy is applied by
/// the training loop.
///
/// Alongside the parameters the model carries the lifecycle state of every
/// conv filter and the rollback snapshot of the most recent prune.
#[derive(Debug, Clone)]
pub struct Model<T> {
    input_shape: [usize; 3],
    layers: Vec<Layer<T>>,
    conv_positions: Vec<usize>,
    states: Vec<Vec<FilterState>>,
    last_prune: Option<PruneSnapshot<T>>,
}

impl<T: Scalar> Model<T> {
    /// Assembles a model, checking that adjacent layer shapes compose and
    /// that the network ends in a dense layer.
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer<T>>) -> Result<Self> {
        let states = layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv(c) => Some(vec![FilterState::default(); c.filters()]),
                _ => None,
            })
            .collect();
        Self::with_states(input_shape, layers, states)
    }

    pub fn with_states(input_shape: [usize; 3], layers: Vec<Layer<T>>, states: Vec<Vec<FilterState>>) -> Result<Self> {
        if input_shape.contains(&0) {
            return Err(Error::shape("model", "positive input dimensions", format!("{input_shape:?}")));
        }
        let mut shape = input_shape.to_vec();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        if !matches!(layers.last(), Some(Layer::Dense(_))) {
            return Err(Error::Config("model must end with a dense layer producing logits".into()));
        }
        let conv_positions: Vec<usize> = layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Conv(_)))
            .map(|(i, _)| i)
            .collect();
        if states.len() != conv_positions.len()
            || states.iter().zip(&conv_positions).any(|(s, &p)| match &layers[p] {
                Layer::Conv(c) => s.len() != c.filters(),
                _ => true,
            })
        {
            return Err(Error::shape("model", "one filter state per conv filter", "mismatched states"));
        }
        Ok(Model {
            input_shape,
            layers,
            conv_positions,
            states,
            last_prune: None,
        })
    }

    /// He-normal initialisation with zero biases.
    pub fn build(input_shape: [usize; 3], specs: &[LayerSpec], rng: &mut impl Rng) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for spec in specs {
            let layer = match *spec {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => {
                    if shape.len() != 3 {
                        return Err(Error::Config("conv layer must follow an image-shaped layer".into()));
                    }
                    if filters == 0 || kernel == 0 {
                        return Err(Error::Config("conv layer needs at least one filter and kernel >= 1".into()));
                    }
                    let fan_in = shape[0] * kernel * kernel;
                    let weights = he_normal(rng, &[filters, shape[0], kernel, kernel], fan_in);
                    Layer::Conv(ConvLayer::new(weights, vec![T::zero(); filters], stride, padding)?)
                }
                LayerSpec::Dense { units } => {
                    if shape.len() != 1 {
                        return Err(Error::Config("dense layer must follow flatten".into()));
                    }
                    if units == 0 {
                        return Err(Error::Config("dense layer needs at least one unit".into()));
                    }
                    Layer::Dense(DenseLayer::new(
                        he_normal(rng, &[units, shape[0]], shape[0]),
                        vec![T::zero(); units],
                    )?)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool => Layer::MaxPool,
                LayerSpec::Flatten => Layer::Flatten,
            };
            shape = layer.output_shape(&shape)?;
            layers.push(layer);
        }
        Self::new(input_shape, layers)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn classes(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense(d)) => d.outputs(),
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn conv_count(&self) -> usize {
        self.conv_positions.len()
    }

    /// Index into `layers()` of the `i`-th conv layer.
    pub fn conv_position(&self, i: usize) -> usize {
        self.conv_positions[i]
    }

    pub fn conv(&self, i: usize) -> &ConvLayer<T> {
        match &self.layers[self.conv_positions[i]] {
            Layer::Conv(c) => c,
            _ => unreachable!(),
        }
    }

    pub fn conv_mut(&mut self, i: usize) -> &mut ConvLayer<T> {
        match &mut self.layers[self.conv_positions[i]] {
            Layer::Conv(c) => c,
            _ => unreachable!(),
        }
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut Layer<T> {
        &mut self.layers[i]
    }

    pub fn states(&self) -> &[Vec<FilterState>] {
        &self.states
    }

    pub(crate) fn states_mut(&mut self) -> &mut [Vec<FilterState>] {
        &mut self.states
    }

    pub fn filter_state(&self, r: FilterRef) -> Option<&FilterState> {
        self.states.get(r.layer)?.get(r.filter)
    }

    pub(crate) fn filter_state_mut(&mut self, r: FilterRef) -> &mut FilterState {
        &mut self.states[r.layer][r.filter]
    }

    pub(crate) fn set_last_prune(&mut self, snapshot: PruneSnapshot<T>) {
        self.last_prune = Some(snapshot);
    }

    pub(crate) fn take_last_prune(&mut self) -> Option<PruneSnapshot<T>> {
        self.last_prune.take()
    }

    pub fn last_prune(&self) -> Option<&PruneSnapshot<T>> {
        self.last_prune.as_ref()
    }

    /// `pruned[l][f]` flags for every conv filter.
    pub fn pruned_flags(&self) -> Vec<Vec<bool>> {
        self.states
            .iter()
            .map(|l| l.iter().map(FilterState::is_pruned).collect())
            .collect()
    }

    pub fn total_filters(&self) -> usize {
        self.states.iter().map(Vec::len).sum()
    }

    pub fn pruned_count(&self) -> usize {
        self.states.iter().flatten().filter(|s| s.is_pruned()).count()
    }

    pub fn remaining_per_layer(&self) -> Vec<usize> {
        self.states
            .iter()
            .map(|l| l.iter().filter(|s| !s.is_pruned()).count())
            .collect()
    }

    /// Per-sample shapes: entry 0 is the input, entry `i + 1` the output of
    /// layer `i`.
    pub fn activation_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = vec![self.input_shape.to_vec()];
        for layer in &self.layers {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .expect("shapes validated at construction");
            shapes.push(next);
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.param_count(),
                Layer::Dense(d) => d.param_count(),
                _ => 0,
            })
            .sum()
    }

    /// Multiply-accumulate operations for one forward pass of one sample.
    pub fn mac_count(&self) -> usize {
        let shapes = self.activation_shapes();
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| match l {
                Layer::Conv(c) => {
                    let out = &shapes[i + 1];
                    c.weights.len() * out[1] * out[2]
                }
                Layer::Dense(d) => d.weights.len(),
                _ => 0,
            })
            .sum()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let s = input.shape();
        if s.len() != 4 || s[1..] != self.input_shape {
            return Err(Error::shape(
                "model input",
                format!("[N, {}, {}, {}]", self.input_shape[0], self.input_shape[1], self.input_shape[2]),
                format!("{s:?}"),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = self.layers[0].forward(input)?;
        for layer in &self.layers[1..] {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Runs the first `upto` layers and returns the activation feeding layer
    /// `upto`.
    pub fn forward_prefix(&self, input: &Tensor<T>, upto: usize) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers[..upto] {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Forward pass keeping every activation: `acts[0]` is the input and
    /// `acts[i + 1]` the output of layer `i`.
    pub fn forward_cached(&self, input: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap())?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Backpropagates `grad_logits` through the cached activations.
    pub fn backward(&self, acts: &[Tensor<T>], grad_logits: &Tensor<T>) -> Result<(Tensor<T>, Gradients<T>)> {
        if acts.len() != self.layers.len() + 1 {
            return Err(Error::shape("model backward", self.layers.len() + 1, acts.len()));
        }
        let mut grads = vec![LayerGrads::None; self.layers.len()];
        let mut g = grad_logits.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[i];
            g = match layer {
                Layer::Conv(c) => {
                    let (gi, pg) = conv2d_backward(input, c, &g)?;
                    grads[i] = LayerGrads::Conv(pg);
                    gi
                }
                Layer::Dense(d) => {
                    let (gi, pg) = d.backward(input, &g)?;
                    grads[i] = LayerGrads::Dense(pg);
                    gi
                }
                Layer::Relu => relu_backward(input, &g)?,
                Layer::MaxPool => maxpool_backward(input, &g)?,
                Layer::Flatten => flatten_backward(input, &g)?,
            };
        }
        Ok((g, Gradients { layers: grads }))
    }

    /// Argmax class per sample; ties resolve to the lowest class index.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Vec<usize>> {
        let logits = self.forward(input)?;
        Ok((0..logits.shape()[0]).map(|i| argmax(logits.row(i))).collect())
    }

    /// Converts every parameter to another scalar type, keeping states.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Layer::Conv(ConvLayer {
                    weights: c.weights.cast(),
                    bias: c.bias.iter().map(|b| U::from_f64_lossy(b.as_f64())).collect(),
                    stride: c.stride,
                    padding: c.padding,
                }),
                Layer::Dense(d) => Layer::Dense(DenseLayer {
                    weights: d.weights.cast(),
                    bias: d.bias.iter().map(|b| U::from_f64_lossy(b.as_f64())).collect(),
                }),
                Layer::Relu => Layer::Relu,
                Layer::MaxPool => Layer::MaxPool,
                Layer::Flatten => Layer::Flatten,
            })
            .collect();
        Model {
            input_shape: self.input_shape,
            layers,
            conv_positions: self.conv_positions.clone(),
            states: self.states.clone(),
            last_prune: None,
        }
    }

    /// Parameters and states are equal; the rollback snapshot is ignored.
    pub fn same_parameters(&self, other: &Model<T>) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers && self.states == other.states
    }
}

pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn he_normal<T: Scalar>(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::from_f64_lossy(normal.sample(rng))).collect();
    Tensor::from_raw(shape.to_vec(), data)
}
