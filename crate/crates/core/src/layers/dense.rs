use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::rng::{self, Purpose};
use crate::Mode;

/// Fully connected layer; weights are `n_in x n_out`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    n_in: usize,
    n_out: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
    #[serde(skip)]
    grad_w: Vec<f64>,
    #[serde(skip)]
    grad_b: Vec<f64>,
    #[serde(skip)]
    cache: Option<(Matrix, Matrix, Matrix)>,
}

impl DenseLayer {
    /// He-scaled normal init for ReLU, `1/n_in` variance otherwise.
    pub fn new(n_in: usize, n_out: usize, activation: Activation, seed: u64) -> Self {
        let var = match activation {
            Activation::Relu => 2.0 / n_in as f64,
            _ => 1.0 / n_in as f64,
        };
        let normal = Normal::new(0.0, libm::sqrt(var)).expect("finite std");
        let mut r = rng::stream(seed, Purpose::Init, 0);
        let weights = (0..n_in * n_out).map(|_| normal.sample(&mut r)).collect();
        Self::from_parts(n_in, n_out, activation, weights, alloc::vec![0.0; n_out])
    }

    pub fn from_parts(n_in: usize, n_out: usize, activation: Activation, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        assert_eq!(weights.len(), n_in * n_out);
        assert_eq!(bias.len(), n_out);
        DenseLayer { n_in, n_out, activation, weights, bias, grad_w: Vec::new(), grad_b: Vec::new(), cache: None }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn forward(&mut self, input: &Matrix, mode: Mode) -> Result<Matrix> {
        if input.cols() != self.n_in {
            return Err(Error::ShapeMismatch { context: "dense forward", expected: self.n_in, found: input.cols() });
        }
        let mut pre = Matrix::zeros(input.rows(), self.n_out);
        for b in 0..input.rows() {
            let z = pre.row_mut(b);
            for (i, &xi) in input.row(b).iter().enumerate() {
                if xi != 0.0 {
                    axpy(xi, &self.weights[i * self.n_out..(i + 1) * self.n_out], z);
                }
            }
            for (zj, bj) in z.iter_mut().zip(&self.bias) {
                *zj += bj;
            }
        }
        let act = self.activation;
        let out = pre.map(|z| act.apply(z));
        self.cache = match mode {
            Mode::Train => Some((input.clone(), pre, out.clone())),
            Mode::Eval => None,
        };
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Matrix, need_input_grad: bool) -> Result<Option<Matrix>> {
        let (input, pre, out) = self.cache.as_ref().ok_or(Error::NoCachedForward)?;
        if grad_out.rows() != input.rows() || grad_out.cols() != self.n_out {
            return Err(Error::ShapeMismatch { context: "dense backward", expected: self.n_out, found: grad_out.cols() });
        }
        let act = self.activation;
        let mut delta = grad_out.clone();
        for ((d, &z), &a) in delta.as_mut_slice().iter_mut().zip(pre.as_slice()).zip(out.as_slice()) {
            *d *= act.derivative(z, a);
        }
        self.grad_w.clear();
        self.grad_w.resize(self.weights.len(), 0.0);
        self.grad_b.clear();
        self.grad_b.resize(self.n_out, 0.0);
        let mut grad_in = need_input_grad.then(|| Matrix::zeros(input.rows(), self.n_in));
        for b in 0..input.rows() {
            let d = delta.row(b);
            axpy(1.0, d, &mut self.grad_b);
            for (i, &xi) in input.row(b).iter().enumerate() {
                if xi != 0.0 {
                    axpy(xi, d, &mut self.grad_w[i * self.n_out..(i + 1) * self.n_out]);
                }
                if let Some(g) = grad_in.as_mut() {
                    g[(b, i)] = dot(&self.weights[i * self.n_out..(i + 1) * self.n_out], d);
                }
            }
        }
        Ok(grad_in)
    }

    pub(crate) fn params_and_grads(&mut self) -> [(&mut [f64], &[f64]); 2] {
        [(&mut self.weights, &self.grad_w), (&mut self.bias, &self.grad_b)]
    }
}
