use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Purpose};
use crate::Mode;

/// Inverted dropout. In train mode each unit is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; eval mode is the
/// identity. Returns the output and the mask that was applied, if any.
pub fn dropout_forward<R: rand::Rng + ?Sized>(x: &Matrix, rate: f64, mode: Mode, rng: &mut R) -> (Matrix, Option<Vec<f64>>) {
    if mode == Mode::Eval || rate == 0.0 {
        return (x.clone(), None);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.as_slice().len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
    let mut out = x.clone();
    for (v, m) in out.as_mut_slice().iter_mut().zip(&mask) {
        *v *= m;
    }
    (out, Some(mask))
}

/// Dropout unit. Mask `n` of the unit's lifetime comes from stream
/// `(seed, Dropout, n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    rate: f64,
    seed: u64,
    calls: u64,
    #[serde(skip)]
    mask: Option<(usize, Option<Vec<f64>>)>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidSpec(alloc::format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Dropout { rate, seed, calls: 0, mask: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        let (out, mask) = if mode == Mode::Train && self.rate > 0.0 {
            let mut r = rng::stream(self.seed, Purpose::Dropout, self.calls);
            self.calls += 1;
            dropout_forward(x, self.rate, mode, &mut r)
        } else {
            (x.clone(), None)
        };
        self.mask = match mode {
            Mode::Train => Some((x.rows(), mask)),
            Mode::Eval => None,
        };
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let (rows, mask) = self.mask.as_ref().ok_or(Error::NoCachedForward)?;
        if grad_out.rows() != *rows {
            return Err(Error::ShapeMismatch { context: "dropout backward", expected: *rows, found: grad_out.rows() });
        }
        let mut g = grad_out.clone();
        if let Some(mask) = mask {
            for (v, m) in g.as_mut_slice().iter_mut().zip(mask) {
                *v *= m;
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_zero_and_eval_are_identities() {
        let x = Matrix::from_vec(2, 3, (0..6).map(|v| v as f64 - 2.5).collect());
        let mut r = rng::stream(0, Purpose::Dropout, 0);
        assert_eq!(dropout_forward(&x, 0.0, Mode::Train, &mut r).0, x);
        assert_eq!(dropout_forward(&x, 0.2, Mode::Eval, &mut r).0, x);
        let mut d = Dropout::new(0.2, 4).unwrap();
        assert_eq!(d.forward(&x, Mode::Eval).unwrap(), x);
    }

    #[test]
    fn invalid_rate() {
        assert!(Dropout::new(1.0, 0).is_err());
        assert!(Dropout::new(-0.1, 0).is_err());
    }

    #[test]
    fn successive_masks_differ() {
        let x = Matrix::from_vec(1, 64, alloc::vec![1.0; 64]);
        let mut d = Dropout::new(0.5, 4).unwrap();
        let a = d.forward(&x, Mode::Train).unwrap();
        let b = d.forward(&x, Mode::Train).unwrap();
        assert_ne!(a, b);
    }
}
