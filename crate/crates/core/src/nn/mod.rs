//! A small f64 network kernel: dense and 2-D convolution layers, ReLU,
//! max-pooling, squared-error and softmax-cross-entropy heads, reverse-mode
//! gradients and plain constant-rate SGD.
//!
//! Samples are row-major. Image samples use `(channels, height, width)`.

mod checkpoint;
mod layer;
mod loss;
mod network;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layer::Layer;
pub use loss::{Head, LossFunction};
pub use network::{build_conv_net, build_mlp, ConvNetSpec, Network};

use crate::{Error, Result};

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != values.len() {
            return Err(Error::DimensionMismatch {
                expected: len,
                actual: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}
