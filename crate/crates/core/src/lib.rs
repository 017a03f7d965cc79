//! Genetic-algorithm training of convolutional neural network weights.
//!
//! The crate is `no_std` (it needs `alloc`) and covers everything that does not
//! touch the file system:
//!
//! * [`nn`]: a small NHWC forward-pass engine (convolution, pooling, dense
//!   layers, activations, loss and accuracy) plus the architecture registry.
//! * [`genome`]: the folded ("Accordion"), semi-folded and flat chromosome
//!   encodings of a network and the lossless conversions between them.
//! * [`operators`]: fitness tables, roulette-wheel selection, per-gene
//!   crossover and section-wise mutation.
//! * [`schemes`]: steady-state, generational and elitism engines.
//! * [`baseline`]: backpropagation with Adam or plain SGD.
//! * [`data`]: in-memory datasets, splits, batching and a synthetic task.
//!
//! Enable the `std` feature for runtime CPU feature detection in the matrix
//! kernels and `serde` for (de)serializable configuration and specs.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![forbid(unsafe_op_in_unsafe_fn)]

extern crate alloc;

pub mod baseline;
pub mod data;
mod error;
pub mod genome;
pub mod nn;
pub mod operators;
pub mod rng;
pub mod schemes;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
