//! Trainable and fixed units composed into networks.

mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod pool;
mod recurrent;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use batchnorm::{BatchNorm, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM};
pub use conv::{conv1d_forward, Conv1d};
pub use dense::DenseLayer;
pub use dropout::{dropout_forward, Dropout};
pub use pool::MaxPool1d;
pub use recurrent::Elman;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sparse::SparseLayer;
use crate::Mode;

/// Elementwise activation with no parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationLayer {
    activation: Activation,
    #[serde(skip)]
    cache: Option<(Matrix, Matrix)>,
}

impl ActivationLayer {
    pub fn new(activation: Activation) -> Self {
        ActivationLayer { activation, cache: None }
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Matrix {
        let act = self.activation;
        let out = x.map(|z| act.apply(z));
        self.cache = (mode == Mode::Train).then(|| (x.clone(), out.clone()));
        out
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let (x, out) = self.cache.as_ref().ok_or(Error::NoCachedForward)?;
        if grad_out.rows() != x.rows() || grad_out.cols() != x.cols() {
            return Err(Error::ShapeMismatch { context: "activation backward", expected: x.cols(), found: grad_out.cols() });
        }
        let mut g = grad_out.clone();
        for ((gv, &z), &a) in g.as_mut_slice().iter_mut().zip(x.as_slice()).zip(out.as_slice()) {
            *gv *= self.activation.derivative(z, a);
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(DenseLayer),
    Sparse(SparseLayer),
    Conv1d(Conv1d),
    BatchNorm(BatchNorm),
    MaxPool1d(MaxPool1d),
    Dropout(Dropout),
    Activation(ActivationLayer),
    Elman(Elman),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Sparse(_) => "sparse",
            Layer::Conv1d(_) => "conv1d",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::MaxPool1d(_) => "max_pool1d",
            Layer::Dropout(_) => "dropout",
            Layer::Activation(_) => "activation",
            Layer::Elman(_) => "elman",
        }
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        match self {
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Sparse(l) => l.forward(x, mode),
            Layer::Conv1d(l) => l.forward(x, mode),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::MaxPool1d(l) => l.forward(x, mode),
            Layer::Dropout(l) => l.forward(x, mode),
            Layer::Activation(l) => Ok(l.forward(x, mode)),
            Layer::Elman(l) => l.forward(x, mode),
        }
    }

    /// Stores parameter gradients on the unit. The input gradient is only
    /// computed when `need_input_grad` is set; units without parameters
    /// always return it.
    pub fn backward(&mut self, grad_out: &Matrix, need_input_grad: bool) -> Result<Option<Matrix>> {
        match self {
            Layer::Dense(l) => l.backward(grad_out, need_input_grad),
            Layer::Sparse(l) => l.backward_impl(grad_out, need_input_grad),
            Layer::Conv1d(l) => l.backward(grad_out, need_input_grad),
            Layer::BatchNorm(l) => l.backward(grad_out, need_input_grad),
            Layer::MaxPool1d(l) => l.backward(grad_out).map(Some),
            Layer::Dropout(l) => l.backward(grad_out).map(Some),
            Layer::Activation(l) => l.backward(grad_out).map(Some),
            Layer::Elman(l) => l.backward(grad_out, need_input_grad),
        }
    }

    /// Parameter buffers paired with their most recent gradients.
    pub fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        match self {
            Layer::Dense(l) => l.params_and_grads().into(),
            Layer::Sparse(l) => l.params_and_grads().into(),
            Layer::Conv1d(l) => l.params_and_grads().into(),
            Layer::BatchNorm(l) => l.params_and_grads().into(),
            Layer::Elman(l) => l.params_and_grads().into(),
            Layer::MaxPool1d(_) | Layer::Dropout(_) | Layer::Activation(_) => Vec::new(),
        }
    }

    pub fn param_count(&mut self) -> usize {
        self.params_and_grads().iter().map(|(p, _)| p.len()).sum()
    }

    /// Plain SGD with the stored gradients. A unit that has not run backward
    /// since construction is left alone.
    pub fn apply_gradients(&mut self, learning_rate: f64) {
        for (p, g) in self.params_and_grads() {
            if p.len() == g.len() {
                for (pv, gv) in p.iter_mut().zip(g) {
                    *pv -= learning_rate * gv;
                }
            }
        }
    }
}
