use crate::activation::sigmoid;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Binary cross-entropy on logits, summed over outputs and averaged over the
/// batch. Returns the loss and its gradient with respect to the logits,
/// `(sigmoid(z) - y) / batch`.
pub fn bce_with_logits(logits: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if logits.rows() != targets.rows() || logits.cols() != targets.cols() {
        return Err(Error::ShapeMismatch { context: "loss targets", expected: logits.cols(), found: targets.cols() });
    }
    let n = logits.rows().max(1) as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for ((g, &z), &y) in grad.as_mut_slice().iter_mut().zip(logits.as_slice()).zip(targets.as_slice()) {
        total += z.max(0.0) - z * y + libm::log1p(libm::exp(-z.abs()));
        *g = (sigmoid(z) - y) / n;
    }
    Ok((total / n, grad))
}

/// Same loss evaluated on probabilities, clamped away from 0 and 1.
pub fn bce_on_probabilities(probs: &Matrix, targets: &Matrix) -> f64 {
    const FLOOR: f64 = 1e-12;
    let n = probs.rows().max(1) as f64;
    let mut total = 0.0;
    for (&p, &y) in probs.as_slice().iter().zip(targets.as_slice()) {
        let p = p.clamp(FLOOR, 1.0 - FLOOR);
        total -= y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p);
    }
    total / n
}
