//! Layer primitives with exact forward and backward passes.

mod activation;
mod conv;
mod dense;
mod lstm;
mod pool;
mod reshape;

pub use activation::{relu, relu_backward, softmax, ReluCache};
pub(crate) use activation::softmax_slice;
pub use conv::{Conv1d, Conv1dCache, Conv1dGrads};
pub use dense::{Dense, DenseCache, DenseGrads};
pub use lstm::{Lstm, LstmCache, LstmGrads};
pub use pool::{MaxPool1d, PoolCache};
pub use reshape::{concat, flatten, split_concat};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One stage of a sequential stack.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv1d(Conv1d),
    Relu,
    MaxPool(MaxPool1d),
    Lstm(Lstm),
    Flatten,
    Dense(Dense),
}

/// Forward intermediates saved for the backward pass.
#[derive(Clone, Debug)]
pub enum LayerCache {
    Conv1d(Conv1dCache),
    Relu(ReluCache),
    MaxPool(PoolCache),
    Lstm(LstmCache),
    Flatten { input_shape: Vec<usize> },
    Dense(DenseCache),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::Relu => "relu",
            Layer::MaxPool(_) => "maxpool",
            Layer::Lstm(_) => "lstm",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv1d(l) => vec![&l.kernels, &l.bias],
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            Layer::Lstm(l) => vec![&l.input_kernel, &l.recurrent_kernel, &l.bias],
            Layer::Relu | Layer::MaxPool(_) | Layer::Flatten => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv1d(l) => vec![&mut l.kernels, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Lstm(l) => vec![&mut l.input_kernel, &mut l.recurrent_kernel, &mut l.bias],
            Layer::Relu | Layer::MaxPool(_) | Layer::Flatten => Vec::new(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LayerCache)> {
        Ok(match self {
            Layer::Conv1d(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Conv1d(c))
            }
            Layer::Relu => {
                let (y, c) = relu(x);
                (y, LayerCache::Relu(c))
            }
            Layer::MaxPool(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::MaxPool(c))
            }
            Layer::Lstm(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Lstm(c))
            }
            Layer::Flatten => (
                flatten(x),
                LayerCache::Flatten {
                    input_shape: x.shape().to_vec(),
                },
            ),
            Layer::Dense(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Dense(c))
            }
        })
    }

    /// Returns the input gradient and adds parameter gradients into `grads`
    /// (one slot per tensor of [`Layer::params`]).
    pub fn backward_into(
        &self,
        cache: &LayerCache,
        grad_out: &Tensor,
        grads: &mut [Tensor],
    ) -> Result<Tensor> {
        match (self, cache) {
            (Layer::Conv1d(l), LayerCache::Conv1d(c)) => l.backward_into(c, grad_out, grads),
            (Layer::Relu, LayerCache::Relu(c)) => relu_backward(c, grad_out),
            (Layer::MaxPool(l), LayerCache::MaxPool(c)) => l.backward(c, grad_out),
            (Layer::Lstm(l), LayerCache::Lstm(c)) => l.backward_into(c, grad_out, grads),
            (Layer::Flatten, LayerCache::Flatten { input_shape }) => {
                grad_out.clone().reshape(input_shape)
            }
            (Layer::Dense(l), LayerCache::Dense(c)) => l.backward_into(c, grad_out, grads),
            (layer, _) => Err(Error::Shape(format!(
                "cache does not belong to a {} layer",
                layer.name()
            ))),
        }
    }
}
