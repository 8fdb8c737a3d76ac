use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::rng::{self, Purpose};
use crate::Mode;

/// Valid (unpadded) cross-correlation of one single-channel signal with
/// `num_filters` kernels of `kernel_len` taps. Output is filter-major, each
/// filter contributing `input.len() - kernel_len + 1` values.
pub fn conv1d_forward(input: &[f64], kernels: &[f64], bias: &[f64], kernel_len: usize) -> Result<Vec<f64>> {
    if kernel_len == 0 || kernel_len > input.len() {
        return Err(Error::ShapeMismatch { context: "conv1d kernel length", expected: input.len(), found: kernel_len });
    }
    if kernels.len() != bias.len() * kernel_len {
        return Err(Error::ShapeMismatch { context: "conv1d kernels", expected: bias.len() * kernel_len, found: kernels.len() });
    }
    let out_len = input.len() - kernel_len + 1;
    let mut out = vec![0.0; bias.len() * out_len];
    conv_into(input, kernels, bias, kernel_len, &mut out);
    Ok(out)
}

fn conv_into(input: &[f64], kernels: &[f64], bias: &[f64], kernel_len: usize, out: &mut [f64]) {
    let out_len = input.len() - kernel_len + 1;
    for (f, o) in out.chunks_exact_mut(out_len).enumerate() {
        o.fill(0.0);
        for k in 0..kernel_len {
            axpy(kernels[f * kernel_len + k], &input[k..k + out_len], o);
        }
        for v in o.iter_mut() {
            *v += bias[f];
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    input_len: usize,
    kernel_len: usize,
    num_filters: usize,
    kernels: Vec<f64>,
    bias: Vec<f64>,
    #[serde(skip)]
    grad_k: Vec<f64>,
    #[serde(skip)]
    grad_b: Vec<f64>,
    #[serde(skip)]
    cache: Option<Matrix>,
}

impl Conv1d {
    pub fn new(input_len: usize, kernel_len: usize, num_filters: usize, seed: u64) -> Result<Self> {
        if kernel_len == 0 || kernel_len > input_len || num_filters == 0 {
            return Err(Error::InvalidSpec(alloc::format!(
                "conv1d needs 1 <= kernel_len ({kernel_len}) <= input_len ({input_len}) and filters >= 1"
            )));
        }
        let normal = Normal::new(0.0, libm::sqrt(2.0 / kernel_len as f64)).expect("finite std");
        let mut r = rng::stream(seed, Purpose::Init, 0);
        let kernels = (0..num_filters * kernel_len).map(|_| normal.sample(&mut r)).collect();
        Ok(Self::from_parts(input_len, kernel_len, num_filters, kernels, vec![0.0; num_filters]))
    }

    pub fn from_parts(input_len: usize, kernel_len: usize, num_filters: usize, kernels: Vec<f64>, bias: Vec<f64>) -> Self {
        assert_eq!(kernels.len(), num_filters * kernel_len);
        assert_eq!(bias.len(), num_filters);
        Conv1d { input_len, kernel_len, num_filters, kernels, bias, grad_k: Vec::new(), grad_b: Vec::new(), cache: None }
    }

    pub fn output_len(&self) -> usize {
        self.input_len - self.kernel_len + 1
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn output_width(&self) -> usize {
        self.num_filters * self.output_len()
    }

    pub fn forward(&mut self, input: &Matrix, mode: Mode) -> Result<Matrix> {
        if input.cols() != self.input_len {
            return Err(Error::ShapeMismatch { context: "conv1d forward", expected: self.input_len, found: input.cols() });
        }
        let mut out = Matrix::zeros(input.rows(), self.output_width());
        for b in 0..input.rows() {
            conv_into(input.row(b), &self.kernels, &self.bias, self.kernel_len, out.row_mut(b));
        }
        self.cache = match mode {
            Mode::Train => Some(input.clone()),
            Mode::Eval => None,
        };
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Matrix, need_input_grad: bool) -> Result<Option<Matrix>> {
        let input = self.cache.as_ref().ok_or(Error::NoCachedForward)?;
        if grad_out.rows() != input.rows() || grad_out.cols() != self.output_width() {
            return Err(Error::ShapeMismatch { context: "conv1d backward", expected: self.output_width(), found: grad_out.cols() });
        }
        let out_len = self.output_len();
        let kl = self.kernel_len;
        self.grad_k.clear();
        self.grad_k.resize(self.kernels.len(), 0.0);
        self.grad_b.clear();
        self.grad_b.resize(self.num_filters, 0.0);
        let mut grad_in = need_input_grad.then(|| Matrix::zeros(input.rows(), self.input_len));
        for b in 0..input.rows() {
            let x = input.row(b);
            for (f, d) in grad_out.row(b).chunks_exact(out_len).enumerate() {
                self.grad_b[f] += d.iter().sum::<f64>();
                for k in 0..kl {
                    self.grad_k[f * kl + k] += dot(d, &x[k..k + out_len]);
                }
                if let Some(g) = grad_in.as_mut() {
                    let gi = g.row_mut(b);
                    for k in 0..kl {
                        axpy(self.kernels[f * kl + k], d, &mut gi[k..k + out_len]);
                    }
                }
            }
        }
        Ok(grad_in)
    }

    pub(crate) fn params_and_grads(&mut self) -> [(&mut [f64], &[f64]); 2] {
        [(&mut self.kernels, &self.grad_k), (&mut self.bias, &self.grad_b)]
    }
}
