use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::Mode;

/// Non-overlapping max pooling applied independently to each of `channels`
/// consecutive segments of the input row. A trailing partial window is dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPool1d {
    channels: usize,
    input_len: usize,
    pool_len: usize,
    #[serde(skip)]
    argmax: Option<(usize, Vec<u32>)>,
}

impl MaxPool1d {
    pub fn new(channels: usize, input_len: usize, pool_len: usize) -> Result<Self> {
        if pool_len == 0 || pool_len > input_len {
            return Err(Error::InvalidSpec(alloc::format!("pool_len {pool_len} must lie in 1..={input_len}")));
        }
        Ok(MaxPool1d { channels, input_len, pool_len, argmax: None })
    }

    pub fn output_len(&self) -> usize {
        self.input_len / self.pool_len
    }

    pub fn output_width(&self) -> usize {
        self.channels * self.output_len()
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        let width = self.channels * self.input_len;
        if x.cols() != width {
            return Err(Error::ShapeMismatch { context: "maxpool forward", expected: width, found: x.cols() });
        }
        let out_len = self.output_len();
        let mut out = Matrix::zeros(x.rows(), self.output_width());
        let mut arg = Vec::with_capacity(x.rows() * self.output_width());
        for b in 0..x.rows() {
            let xr = x.row(b);
            let or = out.row_mut(b);
            for c in 0..self.channels {
                for w in 0..out_len {
                    let start = c * self.input_len + w * self.pool_len;
                    let mut best = start;
                    for k in start + 1..start + self.pool_len {
                        // strict comparison keeps the lowest index on ties
                        if xr[k] > xr[best] {
                            best = k;
                        }
                    }
                    or[c * out_len + w] = xr[best];
                    arg.push(best as u32);
                }
            }
        }
        self.argmax = match mode {
            Mode::Train => Some((x.rows(), arg)),
            Mode::Eval => None,
        };
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let (rows, arg) = self.argmax.as_ref().ok_or(Error::NoCachedForward)?;
        if grad_out.rows() != *rows || grad_out.cols() != self.output_width() {
            return Err(Error::ShapeMismatch { context: "maxpool backward", expected: self.output_width(), found: grad_out.cols() });
        }
        let ow = self.output_width();
        let mut grad_in = Matrix::zeros(*rows, self.channels * self.input_len);
        for b in 0..*rows {
            let g = grad_out.row(b);
            let gi = grad_in.row_mut(b);
            for (o, &src) in arg[b * ow..(b + 1) * ow].iter().enumerate() {
                gi[src as usize] += g[o];
            }
        }
        Ok(grad_in)
    }
}
