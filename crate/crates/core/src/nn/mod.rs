//! Network architectures and the forward pass.
//!
//! Activations are NHWC. Convolution filter banks are stored as
//! `[filters, kernel_h, kernel_w, in_channels]` so each filter is one
//! contiguous run of values; dense weights are `[in_features, out_features]`.
//! No layer carries a bias.

mod arch;
mod init;
mod loss;
mod ops;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

pub use arch::{architecture, lenet_cifar10, mnist_custom, synthetic_tiny, ARCHITECTURES};
pub use init::{glorot_init, glorot_sd, TruncatedGlorot};
pub use loss::{accuracy, argmax, categorical_crossentropy, CE_EPSILON};
pub use ops::{
    apply_activation, avgpool2d, conv2d_forward, dense_forward, maxpool2d, relu, same_padding,
    sigmoid, softmax, softmax_rows,
};
pub(crate) use ops::{col2im_add, im2col, pool_output_extent, ConvGeometry};

use crate::data::Dataset;
use crate::error::{structural, Result};
use crate::tensor::{Scalar, Tensor};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Activation {
    #[default]
    Linear,
    Relu,
    Sigmoid,
    /// Row-wise softmax; only valid on the final layer.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Padding {
    /// Output keeps the input's spatial extent (stride 1).
    #[default]
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct Conv2d {
    pub filters: usize,
    /// `[height, width]`
    pub kernel: [usize; 2],
    pub in_channels: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub padding: Padding,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct Pool2d {
    pub window: [usize; 2],
    pub stride: [usize; 2],
}

impl Pool2d {
    /// Square window with stride equal to the window.
    pub const fn square(size: usize) -> Self {
        Self { window: [size, size], stride: [size, size] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(tag = "kind", rename_all = "snake_case")
)]
pub enum LayerSpec {
    Conv2d(Conv2d),
    MaxPool2d(Pool2d),
    AvgPool2d(Pool2d),
    Flatten,
    Dense(Dense),
}

impl LayerSpec {
    /// Trainable scalars in this layer.
    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Conv2d(c) => c.filters * c.kernel[0] * c.kernel[1] * c.in_channels,
            LayerSpec::Dense(d) => d.in_features * d.out_features,
            _ => 0,
        }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(self, LayerSpec::Conv2d(_) | LayerSpec::Dense(_))
    }
}

/// Activation shape of one example after a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `(height, width, channels)`
    Spatial(usize, usize, usize),
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial(h, w, c) => h * w * c,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Which half of the network a parameterized layer belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Section {
    FeatureExtraction,
    Classification,
}

/// A layer with trainable weights, as seen by the encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayer {
    /// Index into [`NetworkSpec::layers`].
    pub layer: usize,
    pub section: Section,
    /// Filters for a convolution, neurons for a dense layer.
    pub units: usize,
    /// Values per filter (`kh·kw·c_in`) or per neuron (`in_features`).
    pub unit_len: usize,
    /// Shape of the stored parameter tensor.
    pub shape: [usize; 4],
    pub rank: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl ParamLayer {
    pub fn len(&self) -> usize {
        self.units * self.unit_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tensor_shape(&self) -> &[usize] {
        &self.shape[..self.rank]
    }
}

/// Immutable architecture description.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct NetworkSpec {
    pub name: String,
    /// `[height, width, channels]` of one input image.
    pub input: [usize; 3],
    pub class_count: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Checks that the layers compose and returns each layer's output shape.
    pub fn output_shapes(&self) -> Result<Vec<Shape>> {
        let [h, w, c] = self.input;
        if h == 0 || w == 0 || c == 0 {
            return Err(structural!("{}: input extents must be positive", self.name));
        }
        if self.class_count == 0 {
            return Err(structural!("{}: class_count must be positive", self.name));
        }
        let mut shape = Shape::Spatial(h, w, c);
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut flattens = 0;
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match (*layer, shape) {
                (LayerSpec::Conv2d(conv), Shape::Spatial(h, w, c)) => {
                    if conv.in_channels != c {
                        return Err(structural!(
                            "layer {i}: conv expects {} input channels, receives {c}",
                            conv.in_channels
                        ));
                    }
                    if conv.filters == 0 || conv.kernel[0] == 0 || conv.kernel[1] == 0 {
                        return Err(structural!("layer {i}: empty convolution"));
                    }
                    if conv.activation == Activation::Softmax {
                        return Err(structural!("layer {i}: softmax is only valid on the output layer"));
                    }
                    match conv.padding {
                        Padding::Same => Shape::Spatial(h, w, conv.filters),
                        Padding::Valid => {
                            if conv.kernel[0] > h || conv.kernel[1] > w {
                                return Err(structural!(
                                    "layer {i}: kernel {:?} larger than input {h}x{w}",
                                    conv.kernel
                                ));
                            }
                            Shape::Spatial(h - conv.kernel[0] + 1, w - conv.kernel[1] + 1, conv.filters)
                        }
                    }
                }
                (LayerSpec::MaxPool2d(pool) | LayerSpec::AvgPool2d(pool), Shape::Spatial(h, w, c)) => {
                    let oh = pool_output_extent(h, pool.window[0], pool.stride[0])
                        .map_err(|e| structural!("layer {i}: {e}"))?;
                    let ow = pool_output_extent(w, pool.window[1], pool.stride[1])
                        .map_err(|e| structural!("layer {i}: {e}"))?;
                    Shape::Spatial(oh, ow, c)
                }
                (LayerSpec::Flatten, s @ Shape::Spatial(..)) => {
                    flattens += 1;
                    Shape::Flat(s.len())
                }
                (LayerSpec::Dense(dense), Shape::Flat(n)) => {
                    if dense.in_features != n {
                        return Err(structural!(
                            "layer {i}: dense expects {} inputs, receives {n}",
                            dense.in_features
                        ));
                    }
                    if dense.out_features == 0 {
                        return Err(structural!("layer {i}: dense layer without outputs"));
                    }
                    if dense.activation == Activation::Softmax && i != last {
                        return Err(structural!("layer {i}: softmax is only valid on the output layer"));
                    }
                    Shape::Flat(dense.out_features)
                }
                (layer, shape) => {
                    return Err(structural!("layer {i}: {layer:?} cannot follow output shape {shape:?}"))
                }
            };
            shapes.push(shape);
        }
        if flattens != 1 {
            return Err(structural!(
                "{}: expected exactly one flatten layer, found {flattens}",
                self.name
            ));
        }
        match self.layers.last() {
            Some(LayerSpec::Dense(d)) if d.out_features == self.class_count => {}
            _ => {
                return Err(structural!(
                    "{}: last layer must be dense with {} outputs",
                    self.name,
                    self.class_count
                ))
            }
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.output_shapes().map(|_| ())
    }

    /// Parameterized layers in network order.
    pub fn param_layers(&self) -> Vec<ParamLayer> {
        let mut out = Vec::new();
        let mut section = Section::FeatureExtraction;
        for (layer, spec) in self.layers.iter().enumerate() {
            match *spec {
                LayerSpec::Flatten => section = Section::Classification,
                LayerSpec::Conv2d(c) => {
                    let receptive = c.kernel[0] * c.kernel[1];
                    out.push(ParamLayer {
                        layer,
                        section,
                        units: c.filters,
                        unit_len: receptive * c.in_channels,
                        shape: [c.filters, c.kernel[0], c.kernel[1], c.in_channels],
                        rank: 4,
                        fan_in: receptive * c.in_channels,
                        fan_out: receptive * c.filters,
                    })
                }
                LayerSpec::Dense(d) => out.push(ParamLayer {
                    layer,
                    section,
                    units: d.out_features,
                    unit_len: d.in_features,
                    shape: [d.in_features, d.out_features, 0, 0],
                    rank: 2,
                    fan_in: d.in_features,
                    fan_out: d.out_features,
                }),
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }
}

/// A concrete set of weights for a [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    spec: Arc<NetworkSpec>,
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(spec: Arc<NetworkSpec>, params: Vec<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let layers = spec.param_layers();
        if layers.len() != params.len() {
            return Err(structural!(
                "{} expects {} parameter tensors, got {}",
                spec.name,
                layers.len(),
                params.len()
            ));
        }
        for (i, (pl, p)) in layers.iter().zip(&params).enumerate() {
            if p.shape() != pl.tensor_shape() {
                return Err(structural!(
                    "parameter {i}: expected shape {:?}, got {:?}",
                    pl.tensor_shape(),
                    p.shape()
                ));
            }
        }
        Ok(Self { spec, params })
    }

    /// All-zero weights.
    pub fn zeros(spec: Arc<NetworkSpec>) -> Result<Self> {
        spec.validate()?;
        let params = spec.param_layers().iter().map(|pl| Tensor::zeros(pl.tensor_shape())).collect();
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &Arc<NetworkSpec> {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    /// Mutable access to the weights; shapes cannot change through this view.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.params.iter_mut().map(Tensor::data_mut)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network { spec: self.spec.clone(), params: self.params.iter().map(Tensor::cast).collect() }
    }

    pub(crate) fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        let [h, w, c] = self.spec.input;
        let s = batch.shape();
        if s.len() != 4 || s[1] != h || s[2] != w || s[3] != c {
            return Err(structural!(
                "{} expects batches of shape [n, {h}, {w}, {c}], got {s:?}",
                self.spec.name
            ));
        }
        Ok(())
    }

    /// Runs every layer on an NHWC batch; returns `[batch, class_count]`
    /// class probabilities when the output layer uses softmax.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(batch)?;
        let mut params = self.params.iter();
        let mut x: Option<Tensor<T>> = None;
        for layer in &self.spec.layers {
            let input = x.as_ref().unwrap_or(batch);
            let out = layer_forward(layer, input, &mut params)?;
            x = Some(out);
        }
        x.ok_or_else(|| structural!("{} has no layers", self.spec.name))
    }

    /// Accuracy and mean cross-entropy over a whole dataset.
    pub fn evaluate(&self, data: &Dataset, batch_size: usize) -> Result<Evaluation> {
        if batch_size == 0 {
            return Err(crate::error::contract!("batch size must be positive"));
        }
        let n = data.len();
        if n == 0 {
            return Err(crate::Error::Data(alloc::format!("cannot evaluate on an empty dataset")));
        }
        let mut correct = 0usize;
        let mut loss_sum = 0.0f64;
        let mut start = 0;
        while start < n {
            let end = (start + batch_size).min(n);
            let batch = data.batch(start, end)?.cast::<T>();
            let probs = self.forward(&batch)?;
            let labels = &data.labels()[start..end];
            let rows = end - start;
            correct += loss::correct_count(&probs, labels)?;
            loss_sum += categorical_crossentropy(&probs, labels)? * rows as f64;
            start = end;
        }
        Ok(Evaluation { accuracy: correct as f64 / n as f64, loss: loss_sum / n as f64 })
    }
}

/// Fitness inputs for one network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

pub(crate) fn layer_forward<'p, T: Scalar>(
    layer: &LayerSpec,
    input: &Tensor<T>,
    params: &mut impl Iterator<Item = &'p Tensor<T>>,
) -> Result<Tensor<T>> {
    match *layer {
        LayerSpec::Conv2d(c) => {
            let filters = params.next().ok_or_else(|| structural!("missing conv weights"))?;
            conv2d_forward(input, filters, c.padding, c.activation)
        }
        LayerSpec::MaxPool2d(p) => maxpool2d(input, p.window, p.stride),
        LayerSpec::AvgPool2d(p) => avgpool2d(input, p.window, p.stride),
        LayerSpec::Flatten => {
            let n = input.batch_len();
            let item = input.item_len();
            input.clone().reshape([n, item])
        }
        LayerSpec::Dense(d) => {
            let weights = params.next().ok_or_else(|| structural!("missing dense weights"))?;
            dense_forward(input, weights, d.activation)
        }
    }
}
