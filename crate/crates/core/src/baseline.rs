//! Backpropagation baseline.
//!
//! Gradients are exact for the supported layer set: convolutions and dense
//! layers with linear, ReLU or sigmoid activations, max and average pooling,
//! and a softmax output trained on cross-entropy. Max pooling routes the
//! gradient to the first maximum of each window in scan order.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Batches, Dataset};
use crate::error::{contract, structural, Result};
use crate::nn::{
    categorical_crossentropy, col2im_add, im2col, layer_forward, pool_output_extent, Activation, ConvGeometry,
    LayerSpec, Network,
};
use crate::rng::derive_seed;
use crate::schemes::MetricsRecord;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct BaselineConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optimizer steps between metric records.
    pub eval_every: usize,
    pub eval_batch_size: usize,
    /// Stop as soon as an evaluation reaches this accuracy.
    pub target_accuracy: Option<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            batch_size: 32,
            epochs: 1,
            eval_every: 1,
            eval_batch_size: 256,
            target_accuracy: None,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field, message: &str| crate::Error::Config { field, message: message.into() };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(err("learning_rate", "must be a positive number"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(err("beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(err("beta2", "must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(err("epsilon", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(err("batch_size", "must be positive"));
        }
        if self.eval_batch_size == 0 {
            return Err(err("eval_batch_size", "must be positive"));
        }
        if self.eval_every == 0 {
            return Err(err("eval_every", "must be positive"));
        }
        Ok(())
    }
}

/// Per-layer activations of one forward pass: entry `i` is the input of
/// layer `i` and the last entry is the network output.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache<T: Scalar = f32> {
    pub activations: Vec<Tensor<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn probabilities(&self) -> &Tensor<T> {
        self.activations.last().expect("cache holds at least the input")
    }

    /// Scalars held across all cached activations.
    pub fn scalar_count(&self) -> usize {
        self.activations.iter().map(Tensor::len).sum()
    }
}

/// Forward pass that keeps every intermediate activation. The returned
/// probabilities are bit-identical to [`Network::forward`].
pub fn forward_with_cache<T: Scalar>(net: &Network<T>, batch: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
    net.check_batch(batch)?;
    let layers = &net.spec().layers;
    let mut activations: Vec<Tensor<T>> = Vec::with_capacity(layers.len() + 1);
    activations.push(batch.clone());
    let mut params = net.params().iter();
    for layer in layers {
        let out = layer_forward(layer, activations.last().expect("non-empty"), &mut params)?;
        activations.push(out);
    }
    let cache = ForwardCache { activations };
    Ok((cache.probabilities().clone(), cache))
}

/// Gradient of the mean cross-entropy with respect to every parameter
/// tensor, one entry per parameterized layer.
pub fn backprop<T: Scalar>(net: &Network<T>, cache: &ForwardCache<T>, labels: &[usize]) -> Result<Vec<Tensor<T>>> {
    let spec = net.spec().clone();
    match spec.layers.last() {
        Some(LayerSpec::Dense(d)) if d.activation == Activation::Softmax => {}
        _ => return Err(contract!("backpropagation needs a dense softmax output layer")),
    }
    let activations = &cache.activations;
    if activations.len() != spec.layers.len() + 1 {
        return Err(contract!(
            "cache holds {} activations, `{}` needs {}",
            activations.len(),
            spec.name,
            spec.layers.len() + 1
        ));
    }
    let shapes = spec.output_shapes()?;
    net.check_batch(&activations[0])?;
    let n = activations[0].batch_len();
    for (a, s) in activations[1..].iter().zip(&shapes) {
        if a.batch_len() != n || a.item_len() != s.len() {
            return Err(contract!("cache does not belong to `{}`", spec.name));
        }
    }
    if labels.len() != n {
        return Err(contract!("{} labels for a batch of {n}", labels.len()));
    }
    let classes = spec.class_count;
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(contract!("label {bad} is not below {classes}"));
    }

    let probs = cache.probabilities();
    let scale = T::from_f64(1.0 / n as f64);
    let mut grad: Vec<T> = probs.data().to_vec();
    for (row, &label) in labels.iter().enumerate() {
        grad[row * classes + label] = grad[row * classes + label] - T::one();
    }
    grad.iter_mut().for_each(|g| *g = *g * scale);

    let mut out: Vec<Option<Tensor<T>>> = vec![None; net.params().len()];
    let mut param_index = net.params().len();
    let last = spec.layers.len() - 1;
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let input = &activations[i];
        let output = &activations[i + 1];
        let need_input_grad = i > 0;
        if i != last {
            activation_backward(layer_activation(layer), output.data(), &mut grad);
        }
        grad = match *layer {
            LayerSpec::Dense(_) => {
                param_index -= 1;
                let w = &net.params()[param_index];
                let (fan_in, fan_out) = (input.item_len(), w.shape()[1]);
                let mut dw = vec![T::zero(); fan_in * fan_out];
                T::matmul(fan_in, n, fan_out, input.data(), (1, fan_in), &grad, (fan_out, 1), &mut dw, (fan_out, 1));
                out[param_index] = Some(Tensor::new([fan_in, fan_out], dw)?);
                if need_input_grad {
                    let mut dx = vec![T::zero(); n * fan_in];
                    T::matmul(n, fan_out, fan_in, &grad, (fan_out, 1), w.data(), (1, fan_out), &mut dx, (fan_in, 1));
                    dx
                } else {
                    Vec::new()
                }
            }
            LayerSpec::Conv2d(c) => {
                param_index -= 1;
                let w = &net.params()[param_index];
                let s = input.shape();
                let g = ConvGeometry::new([s[0], s[1], s[2], s[3]], c.kernel, c.padding)?;
                let (rows, k, f) = (g.rows(), g.patch_len(), c.filters);
                let cols = im2col(input.data(), &g);
                let mut dw = vec![T::zero(); f * k];
                T::matmul(f, rows, k, &grad, (1, f), &cols, (k, 1), &mut dw, (k, 1));
                out[param_index] = Some(Tensor::new(w.shape().to_vec(), dw)?);
                if need_input_grad {
                    let mut dcols = vec![T::zero(); rows * k];
                    T::matmul(rows, f, k, &grad, (f, 1), w.data(), (k, 1), &mut dcols, (k, 1));
                    col2im_add(&dcols, &g)
                } else {
                    Vec::new()
                }
            }
            LayerSpec::MaxPool2d(p) => maxpool_backward(input, &grad, p.window, p.stride)?,
            LayerSpec::AvgPool2d(p) => avgpool_backward(input, &grad, p.window, p.stride)?,
            LayerSpec::Flatten => grad,
        };
    }
    out.into_iter()
        .map(|g| g.ok_or_else(|| structural!("parameter without gradient")))
        .collect()
}

/// Mean cross-entropy of `batch` and its parameter gradients.
pub fn gradients<T: Scalar>(net: &Network<T>, batch: &Tensor<T>, labels: &[usize]) -> Result<(f64, Vec<Tensor<T>>)> {
    let (probs, cache) = forward_with_cache(net, batch)?;
    let grads = backprop(net, &cache, labels)?;
    Ok((categorical_crossentropy(&probs, labels)?, grads))
}

fn layer_activation(layer: &LayerSpec) -> Activation {
    match layer {
        LayerSpec::Conv2d(c) => c.activation,
        LayerSpec::Dense(d) => d.activation,
        _ => Activation::Linear,
    }
}

fn activation_backward<T: Scalar>(act: Activation, output: &[T], grad: &mut [T]) {
    match act {
        Activation::Linear | Activation::Softmax => {}
        Activation::Relu => {
            for (g, &y) in grad.iter_mut().zip(output) {
                if y <= T::zero() {
                    *g = T::zero();
                }
            }
        }
        Activation::Sigmoid => {
            for (g, &y) in grad.iter_mut().zip(output) {
                *g = *g * y * (T::one() - y);
            }
        }
    }
}

fn pool_dims<T: Scalar>(input: &Tensor<T>, window: [usize; 2], stride: [usize; 2]) -> Result<[usize; 6]> {
    let s = input.shape();
    let oh = pool_output_extent(s[1], window[0], stride[0]).map_err(crate::Error::Structural)?;
    let ow = pool_output_extent(s[2], window[1], stride[1]).map_err(crate::Error::Structural)?;
    Ok([s[0], s[1], s[2], s[3], oh, ow])
}

fn maxpool_backward<T: Scalar>(input: &Tensor<T>, grad: &[T], window: [usize; 2], stride: [usize; 2]) -> Result<Vec<T>> {
    let [n, h, w, c, oh, ow] = pool_dims(input, window, stride)?;
    let x = input.data();
    let mut dx = vec![T::zero(); x.len()];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = &grad[((b * oh + oy) * ow + ox) * c..][..c];
                for ch in 0..c {
                    let mut best = T::neg_infinity();
                    let mut at = None;
                    for dy in 0..window[0] {
                        for dx_ in 0..window[1] {
                            let src = ((b * h + oy * stride[0] + dy) * w + ox * stride[1] + dx_) * c + ch;
                            if at.is_none() || x[src] > best {
                                best = x[src];
                                at = Some(src);
                            }
                        }
                    }
                    let at = at.expect("window is non-empty");
                    dx[at] = dx[at] + g[ch];
                }
            }
        }
    }
    Ok(dx)
}

fn avgpool_backward<T: Scalar>(input: &Tensor<T>, grad: &[T], window: [usize; 2], stride: [usize; 2]) -> Result<Vec<T>> {
    let [n, h, w, c, oh, ow] = pool_dims(input, window, stride)?;
    let share = T::from_f64(1.0 / (window[0] * window[1]) as f64);
    let mut dx = vec![T::zero(); input.len()];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = &grad[((b * oh + oy) * ow + ox) * c..][..c];
                for dy in 0..window[0] {
                    for dx_ in 0..window[1] {
                        let dst = ((b * h + oy * stride[0] + dy) * w + ox * stride[1] + dx_) * c;
                        for (d, &v) in dx[dst..dst + c].iter_mut().zip(g) {
                            *d = *d + v * share;
                        }
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Parameter update rule with its running state.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { learning_rate: f32 },
    Adam { learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64, t: u64, m: Vec<Vec<f32>>, v: Vec<Vec<f32>> },
}

impl Optimizer {
    pub fn new(config: &BaselineConfig, net: &Network) -> Self {
        match config.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd { learning_rate: config.learning_rate as f32 },
            OptimizerKind::Adam => {
                let zeros: Vec<Vec<f32>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
                Optimizer::Adam {
                    learning_rate: config.learning_rate,
                    beta1: config.beta1,
                    beta2: config.beta2,
                    epsilon: config.epsilon,
                    t: 0,
                    m: zeros.clone(),
                    v: zeros,
                }
            }
        }
    }

    pub fn apply(&mut self, net: &mut Network, grads: &[Tensor]) {
        match self {
            Optimizer::Sgd { learning_rate } => {
                for (p, g) in net.params_mut().zip(grads) {
                    for (w, &d) in p.iter_mut().zip(g.data()) {
                        *w -= *learning_rate * d;
                    }
                }
            }
            Optimizer::Adam { learning_rate, beta1, beta2, epsilon, t, m, v } => {
                *t += 1;
                let c1 = 1.0 - libm::pow(*beta1, *t as f64);
                let c2 = 1.0 - libm::pow(*beta2, *t as f64);
                let (b1, b2) = (*beta1 as f32, *beta2 as f32);
                let (lr, eps) = (*learning_rate as f32, *epsilon as f32);
                let (c1, c2) = (c1 as f32, c2 as f32);
                for (((p, g), m), v) in net.params_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                    for (((w, &d), m), v) in p.iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = b1 * *m + (1.0 - b1) * d;
                        *v = b2 * *v + (1.0 - b2) * d * d;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *w -= lr * m_hat / (libm::sqrtf(v_hat) + eps);
                    }
                }
            }
        }
    }
}

/// Minibatch trainer. Epoch `e` visits the training set in an order seeded
/// by `derive_seed(seed, e)`.
pub struct Backprop<'d> {
    config: BaselineConfig,
    net: Network,
    optimizer: Optimizer,
    train: &'d Dataset,
    eval: &'d Dataset,
    seed: u64,
    steps: u64,
    epoch: usize,
    batches: Batches<'d>,
}

impl<'d> Backprop<'d> {
    pub fn new(config: BaselineConfig, net: Network, train: &'d Dataset, eval: &'d Dataset, seed: u64) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(crate::Error::Data("training set is empty".into()));
        }
        let optimizer = Optimizer::new(&config, &net);
        let batches = train.batches(config.batch_size, Some(derive_seed(seed, 0)))?;
        Ok(Self { config, net, optimizer, train, eval, seed, steps: 0, epoch: 0, batches })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.train.len().div_ceil(self.config.batch_size)
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// One gradient step; returns the minibatch loss, or `None` once every
    /// epoch has run.
    pub fn step(&mut self) -> Result<Option<f64>> {
        if self.finished() {
            return Ok(None);
        }
        let batch = match self.batches.next() {
            Some(b) => b,
            None => {
                self.epoch += 1;
                if self.finished() {
                    return Ok(None);
                }
                self.batches = self.train.batches(self.config.batch_size, Some(derive_seed(self.seed, self.epoch as u64)))?;
                self.batches.next().expect("training set is non-empty")
            }
        };
        let (loss, grads) = gradients(&self.net, &batch.images, &batch.labels)?;
        self.optimizer.apply(&mut self.net, &grads);
        self.steps += 1;
        if self.batches.len() == 0 {
            self.epoch += 1;
            if !self.finished() {
                self.batches =
                    self.train.batches(self.config.batch_size, Some(derive_seed(self.seed, self.epoch as u64)))?;
            }
        }
        Ok(Some(loss))
    }

    /// Scores the current network on the evaluation set. The initial
    /// network counts as one evaluation, so `evaluations_so_far` is
    /// `steps + 1`.
    pub fn record(&self) -> Result<MetricsRecord> {
        let e = self.net.evaluate(self.eval, self.config.eval_batch_size)?;
        let evaluations = self.steps + 1;
        Ok(MetricsRecord {
            generation: self.steps,
            evaluations_so_far: evaluations,
            best_fitness: e.accuracy,
            mean_fitness: e.accuracy,
            worst_fitness: e.accuracy,
            best_evaluation_loss: e.loss,
            wall_clock_seconds: 0.0,
            log10_iterations: libm::log10(evaluations as f64),
        })
    }

    pub fn eval_interval(&self) -> usize {
        self.config.eval_every
    }

    pub fn target_reached(&self, record: &MetricsRecord) -> bool {
        self.config.target_accuracy.is_some_and(|t| record.best_fitness >= t)
    }
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub records: Vec<MetricsRecord>,
    pub network: Network,
}

/// Trains `net` for the configured number of epochs, recording metrics
/// before the first step, every `eval_every` steps and after the last step.
pub fn train_bp(config: &BaselineConfig, net: Network, train: &Dataset, eval: &Dataset, seed: u64) -> Result<BaselineRun> {
    let mut trainer = Backprop::new(*config, net, train, eval, seed)?;
    let interval = trainer.eval_interval() as u64;
    let mut records = vec![trainer.record()?];
    if !trainer.target_reached(&records[0]) {
        while trainer.step()?.is_some() {
            if trainer.steps() % interval == 0 || trainer.finished() {
                let r = trainer.record()?;
                records.push(r);
                if trainer.target_reached(&r) {
                    break;
                }
            }
        }
    }
    if records.last().map(|r| r.generation) != Some(trainer.steps()) {
        records.push(trainer.record()?);
    }
    Ok(BaselineRun { records, network: trainer.into_network() })
}
