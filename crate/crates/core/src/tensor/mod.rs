//! Minimal dense tensor engine.
//!
//! Only what the instrument network needs: 3×3 "full" convolution, 3×3/3
//! max pooling, global max pooling, dense layers, four activation kinds,
//! sigmoid, inverted dropout, cross-entropy, Adam and Glorot init. Every
//! operation is a pair of free functions (forward returning a cache, backward
//! consuming it) so that parameters can be shared read-only between worker
//! threads while gradients accumulate into per-worker buffers.
//!
//! All arithmetic is `f64`.

mod activation;
mod adam;
mod conv;
mod dense;
mod dropout;
pub mod gradcheck;
mod init;
mod loss;
mod pool;

pub use activation::{activation_backward, activation_forward, sigmoid, sigmoid_scalar, ActivationKind};
pub use adam::{adam_step, AdamConfig};
pub use conv::{conv2d_backward, conv2d_forward, conv_output_dims, Conv2dCache, CONV_GROWTH, KERNEL_SIZE};
pub use dense::{dense_backward, dense_forward};
pub use dropout::{dropout_backward, dropout_forward, DropoutMask};
pub use init::{glorot_limit, glorot_uniform_init};
pub use loss::{categorical_cross_entropy, categorical_cross_entropy_grad, validate_one_hot, CrossEntropy, LOSS_EPSILON};
pub use pool::{
    global_max_pool_backward, global_max_pool_forward, maxpool2d_backward, maxpool2d_forward,
    pool_output_dim, PoolCache, POOL_SIZE, POOL_STRIDE,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} does not hold {len} values")]
    ShapeData { shape: Vec<usize>, len: usize },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("channel mismatch: input has {input} channels, weights expect {weights}")]
    ChannelMismatch { input: usize, weights: usize },
    #[error("spatial dims {0}x{1} are smaller than the 3x3 pooling window")]
    PoolTooSmall(usize, usize),
    #[error("dropout rate {0} outside [0, 1)")]
    DropoutRate(f64),
    #[error("leaky slope {0} outside (0, 1)")]
    LeakySlope(f64),
    #[error("target is not one-hot")]
    NotOneHot,
    #[error("parameter has no gradient")]
    MissingGrad,
}

/// Dense row-major array with an optional same-shape gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; shape.iter().product()],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(TensorError::ShapeData {
                shape: shape.to_vec(),
                len: values.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            values,
            grad: None,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first access.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<(), TensorError> {
        if grad.len() != self.values.len() {
            return Err(TensorError::ShapeData {
                shape: self.shape.clone(),
                len: grad.len(),
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A learnable tensor together with its Adam state.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub tensor: Tensor,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(tensor: Tensor) -> Self {
        let n = tensor.len();
        Self {
            tensor,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step_count: 0,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    pub fn values(&self) -> &[f64] {
        self.tensor.values()
    }

    pub fn len(&self) -> usize {
        self.tensor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensor.is_empty()
    }
}
