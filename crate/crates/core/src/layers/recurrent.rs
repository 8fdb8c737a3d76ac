use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::rng::{self, Purpose};
use crate::Mode;

/// Elman cell run over a row split into `steps` chunks of `chunk_len` values:
/// `h_t = tanh(x_t W_x + h_{t-1} W_h + b)`, `h_0 = 0`. The output is `h_T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Elman {
    chunk_len: usize,
    steps: usize,
    hidden: usize,
    w_x: Vec<f64>,
    w_h: Vec<f64>,
    bias: Vec<f64>,
    #[serde(skip)]
    grad_wx: Vec<f64>,
    #[serde(skip)]
    grad_wh: Vec<f64>,
    #[serde(skip)]
    grad_b: Vec<f64>,
    /// Input plus hidden states `h_0..=h_T`, per sample.
    #[serde(skip)]
    cache: Option<(Matrix, Vec<f64>)>,
}

impl Elman {
    pub fn new(input_len: usize, chunk_len: usize, hidden: usize, seed: u64) -> Result<Self> {
        if chunk_len == 0 || hidden == 0 || input_len % chunk_len != 0 {
            return Err(Error::InvalidSpec(alloc::format!(
                "rnn chunk_len {chunk_len} must divide input length {input_len}; hidden {hidden} must be >= 1"
            )));
        }
        let mut r = rng::stream(seed, Purpose::Init, 0);
        let nx = Normal::new(0.0, libm::sqrt(1.0 / chunk_len as f64)).expect("finite std");
        let nh = Normal::new(0.0, libm::sqrt(1.0 / hidden as f64)).expect("finite std");
        let w_x = (0..chunk_len * hidden).map(|_| nx.sample(&mut r)).collect();
        let w_h = (0..hidden * hidden).map(|_| nh.sample(&mut r)).collect();
        Ok(Elman {
            chunk_len,
            steps: input_len / chunk_len,
            hidden,
            w_x,
            w_h,
            bias: vec![0.0; hidden],
            grad_wx: Vec::new(),
            grad_wh: Vec::new(),
            grad_b: Vec::new(),
            cache: None,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_len(&self) -> usize {
        self.steps * self.chunk_len
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        if x.cols() != self.input_len() {
            return Err(Error::ShapeMismatch { context: "rnn forward", expected: self.input_len(), found: x.cols() });
        }
        let (h, t, c) = (self.hidden, self.steps, self.chunk_len);
        let stride = (t + 1) * h;
        let mut states = vec![0.0; x.rows() * stride];
        let mut out = Matrix::zeros(x.rows(), h);
        let mut z = vec![0.0; h];
        for b in 0..x.rows() {
            let xr = x.row(b);
            let st = &mut states[b * stride..(b + 1) * stride];
            for step in 0..t {
                z.copy_from_slice(&self.bias);
                for (k, &xv) in xr[step * c..(step + 1) * c].iter().enumerate() {
                    axpy(xv, &self.w_x[k * h..(k + 1) * h], &mut z);
                }
                let (prev, next) = st.split_at_mut((step + 1) * h);
                let prev = &prev[step * h..];
                for (i, &hv) in prev.iter().enumerate() {
                    axpy(hv, &self.w_h[i * h..(i + 1) * h], &mut z);
                }
                for (o, &zv) in next[..h].iter_mut().zip(&z) {
                    *o = libm::tanh(zv);
                }
            }
            out.row_mut(b).copy_from_slice(&st[t * h..]);
        }
        self.cache = match mode {
            Mode::Train => Some((x.clone(), states)),
            Mode::Eval => None,
        };
        Ok(out)
    }

    /// Backpropagation through time from the gradient at `h_T`.
    pub fn backward(&mut self, grad_out: &Matrix, need_input_grad: bool) -> Result<Option<Matrix>> {
        let (x, states) = self.cache.as_ref().ok_or(Error::NoCachedForward)?;
        if grad_out.rows() != x.rows() || grad_out.cols() != self.hidden {
            return Err(Error::ShapeMismatch { context: "rnn backward", expected: self.hidden, found: grad_out.cols() });
        }
        let (h, t, c) = (self.hidden, self.steps, self.chunk_len);
        let stride = (t + 1) * h;
        self.grad_wx.clear();
        self.grad_wx.resize(self.w_x.len(), 0.0);
        self.grad_wh.clear();
        self.grad_wh.resize(self.w_h.len(), 0.0);
        self.grad_b.clear();
        self.grad_b.resize(h, 0.0);
        let mut grad_in = need_input_grad.then(|| Matrix::zeros(x.rows(), x.cols()));
        let mut dh = vec![0.0; h];
        let mut dz = vec![0.0; h];
        for b in 0..x.rows() {
            let xr = x.row(b);
            let st = &states[b * stride..(b + 1) * stride];
            dh.copy_from_slice(grad_out.row(b));
            for step in (0..t).rev() {
                let h_t = &st[(step + 1) * h..(step + 2) * h];
                let h_prev = &st[step * h..(step + 1) * h];
                for ((d, &g), &hv) in dz.iter_mut().zip(&dh).zip(h_t) {
                    *d = g * (1.0 - hv * hv);
                }
                axpy(1.0, &dz, &mut self.grad_b);
                let xs = &xr[step * c..(step + 1) * c];
                for (k, &xv) in xs.iter().enumerate() {
                    axpy(xv, &dz, &mut self.grad_wx[k * h..(k + 1) * h]);
                }
                for (i, &hv) in h_prev.iter().enumerate() {
                    axpy(hv, &dz, &mut self.grad_wh[i * h..(i + 1) * h]);
                }
                if let Some(g) = grad_in.as_mut() {
                    let gr = &mut g.row_mut(b)[step * c..(step + 1) * c];
                    for (k, gv) in gr.iter_mut().enumerate() {
                        *gv = dot(&self.w_x[k * h..(k + 1) * h], &dz);
                    }
                }
                for (i, d) in dh.iter_mut().enumerate() {
                    *d = dot(&self.w_h[i * h..(i + 1) * h], &dz);
                }
            }
        }
        Ok(grad_in)
    }

    pub(crate) fn params_and_grads(&mut self) -> [(&mut [f64], &[f64]); 3] {
        [(&mut self.w_x, &self.grad_wx), (&mut self.w_h, &self.grad_wh), (&mut self.bias, &self.grad_b)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_shape() {
        let mut cell = Elman::new(600, 10, 8, 1).unwrap();
        assert_eq!(cell.steps(), 60);
        let out = cell.forward(&Matrix::zeros(3, 600), Mode::Eval).unwrap();
        assert_eq!((out.rows(), out.cols()), (3, 8));
        // zero input and zero bias keep the state at zero
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chunk_must_divide_input() {
        assert!(Elman::new(600, 7, 8, 1).is_err());
    }
}
