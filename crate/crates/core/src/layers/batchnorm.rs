use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::Mode;

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.9;

/// Per-feature batch normalisation with learned scale and shift.
///
/// Running statistics follow `running = momentum * running + (1 - momentum) * batch`
/// and use the biased batch variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    features: usize,
    eps: f64,
    momentum: f64,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    #[serde(skip)]
    grad_gamma: Vec<f64>,
    #[serde(skip)]
    grad_beta: Vec<f64>,
    #[serde(skip)]
    cache: Option<(Matrix, Vec<f64>)>,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            features,
            eps: DEFAULT_BN_EPS,
            momentum: DEFAULT_BN_MOMENTUM,
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            grad_gamma: Vec::new(),
            grad_beta: Vec::new(),
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn gamma_mut(&mut self) -> &mut [f64] {
        &mut self.gamma
    }

    pub fn beta_mut(&mut self) -> &mut [f64] {
        &mut self.beta
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        if x.cols() != self.features {
            return Err(Error::ShapeMismatch { context: "batchnorm forward", expected: self.features, found: x.cols() });
        }
        let n = x.rows();
        let f = self.features;
        match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::BatchTooSmall(n));
                }
                let mut mean = vec![0.0; f];
                for r in x.row_iter() {
                    for (m, v) in mean.iter_mut().zip(r) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; f];
                for r in x.row_iter() {
                    for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                        let c = v - m;
                        *s += c * c;
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + self.eps)).collect();
                let mut x_hat = Matrix::zeros(n, f);
                let mut out = Matrix::zeros(n, f);
                for b in 0..n {
                    let xr = x.row(b);
                    let hr = x_hat.row_mut(b);
                    for j in 0..f {
                        hr[j] = (xr[j] - mean[j]) * inv_std[j];
                    }
                    let or = out.row_mut(b);
                    let hr = x_hat.row(b);
                    for j in 0..f {
                        or[j] = self.gamma[j] * hr[j] + self.beta[j];
                    }
                }
                let m = self.momentum;
                for j in 0..f {
                    self.running_mean[j] = m * self.running_mean[j] + (1.0 - m) * mean[j];
                    self.running_var[j] = m * self.running_var[j] + (1.0 - m) * var[j];
                }
                self.cache = Some((x_hat, inv_std));
                Ok(out)
            }
            Mode::Eval => {
                self.cache = None;
                let scale: Vec<f64> =
                    (0..f).map(|j| self.gamma[j] / libm::sqrt(self.running_var[j] + self.eps)).collect();
                let mut out = Matrix::zeros(n, f);
                for b in 0..n {
                    let xr = x.row(b);
                    let or = out.row_mut(b);
                    for j in 0..f {
                        or[j] = (xr[j] - self.running_mean[j]) * scale[j] + self.beta[j];
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn backward(&mut self, grad_out: &Matrix, need_input_grad: bool) -> Result<Option<Matrix>> {
        let (x_hat, inv_std) = self.cache.as_ref().ok_or(Error::NoCachedForward)?;
        if grad_out.rows() != x_hat.rows() || grad_out.cols() != self.features {
            return Err(Error::ShapeMismatch { context: "batchnorm backward", expected: self.features, found: grad_out.cols() });
        }
        let n = x_hat.rows();
        let f = self.features;
        self.grad_gamma.clear();
        self.grad_gamma.resize(f, 0.0);
        self.grad_beta.clear();
        self.grad_beta.resize(f, 0.0);
        for b in 0..n {
            let d = grad_out.row(b);
            let h = x_hat.row(b);
            for j in 0..f {
                self.grad_beta[j] += d[j];
                self.grad_gamma[j] += d[j] * h[j];
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        // dx = gamma * inv_std / n * (n * dy - sum(dy) - x_hat * sum(dy * x_hat))
        let mut grad_in = Matrix::zeros(n, f);
        let nf = n as f64;
        for b in 0..n {
            let d = grad_out.row(b);
            let h = x_hat.row(b);
            let g = grad_in.row_mut(b);
            for j in 0..f {
                g[j] = self.gamma[j] * inv_std[j] / nf
                    * (nf * d[j] - self.grad_beta[j] - h[j] * self.grad_gamma[j]);
            }
        }
        Ok(Some(grad_in))
    }

    pub(crate) fn params_and_grads(&mut self) -> [(&mut [f64], &[f64]); 2] {
        [(&mut self.gamma, &self.grad_gamma), (&mut self.beta, &self.grad_beta)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_output_is_standardised() {
        let x = Matrix::from_vec(4, 2, vec![10.0, 10.0, 20.0, 20.0, 30.0, 30.0, 60.0, 0.0]);
        let mut bn = BatchNorm::new(2);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = (0..4).map(|b| y[(b, j)]).collect();
            let mean = col.iter().sum::<f64>() / 4.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-6);
            // eps pulls the variance below one by eps / var, under 1e-6 here
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let x = Matrix::from_vec(3, 1, vec![4.0, 4.0, 4.0]);
        let y = BatchNorm::new(1).forward(&x, Mode::Train).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_sample_batch_rejected_in_train_mode() {
        let x = Matrix::from_vec(1, 1, vec![4.0]);
        let mut bn = BatchNorm::new(1);
        assert_eq!(bn.forward(&x, Mode::Train).unwrap_err(), Error::BatchTooSmall(1));
        assert!(bn.forward(&x, Mode::Eval).is_ok());
    }

    #[test]
    fn running_statistics_track_momentum() {
        let x = Matrix::from_vec(2, 1, vec![1.0, 3.0]);
        let mut bn = BatchNorm::new(1);
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean()[0] - 0.2).abs() < 1e-15);
        assert!((bn.running_var()[0] - (0.9 + 0.1 * 1.0)).abs() < 1e-15);
    }
}
