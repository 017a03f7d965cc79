use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Network, NetworkSpec, ParamLayer};
use crate::error::Result;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Standard deviation of a normal truncated to ±2σ, relative to σ.
const TRUNCATION_SD_RATIO: f64 = 0.879_625_661_034_239_8;

/// Glorot-normal target standard deviation `sqrt(2 / (fan_in + fan_out))`.
pub fn glorot_sd(layer: &ParamLayer) -> f64 {
    libm::sqrt(2.0 / (layer.fan_in + layer.fan_out) as f64)
}

/// Zero-centred normal truncated at two standard deviations, scaled so the
/// truncated distribution has the requested standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedGlorot {
    sd: f64,
    scale: f64,
}

impl TruncatedGlorot {
    pub fn new(sd: f64) -> Self {
        Self { sd, scale: sd / TRUNCATION_SD_RATIO }
    }

    pub fn for_layer(layer: &ParamLayer) -> Self {
        Self::new(glorot_sd(layer))
    }

    /// Standard deviation of the samples.
    pub fn sd(&self) -> f64 {
        self.sd
    }

    /// Samples never exceed this magnitude.
    pub fn bound(&self) -> f64 {
        2.0 * self.scale
    }
}

impl Distribution<f64> for TruncatedGlorot {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= 2.0 {
                return z * self.scale;
            }
        }
    }
}

/// Draws every weight from its layer's truncated Glorot-normal distribution.
///
/// Values are drawn layer by layer in storage order from stream
/// `(seed, init)`, so identical inputs give bit-identical networks.
pub fn glorot_init(spec: Arc<NetworkSpec>, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = RngStream::new(seed, crate::rng::STREAM_INIT);
    let params = spec
        .param_layers()
        .iter()
        .map(|layer| {
            let dist = TruncatedGlorot::for_layer(layer);
            let data: Vec<f32> = (0..layer.len()).map(|_| dist.sample(&mut rng) as f32).collect();
            Tensor::new(layer.tensor_shape(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(spec, params)
}
