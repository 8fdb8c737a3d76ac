//! Sparse layers with Erdős–Rényi initialisation and prune-and-regrow evolution.
//!
//! Connections are kept in compressed rows ordered by input index. Forward
//! scatters each input row into the outputs; backward gathers along the same
//! rows, so both passes walk memory linearly and sum in a fixed order.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Purpose};
use crate::Mode;

pub const DEFAULT_EPSILON: f64 = 11.0;
pub const DEFAULT_ZETA: f64 = 0.3;
pub const DEFAULT_INIT_SCALE: f64 = 0.1;
const MAX_INIT_ATTEMPTS: u64 = 16;

/// Edge probability of an `n_in x n_out` Erdős–Rényi layer.
pub fn edge_probability(n_in: usize, n_out: usize, epsilon: f64) -> f64 {
    (epsilon * (n_in + n_out) as f64 / (n_in as f64 * n_out as f64)).min(1.0)
}

/// How many connections an evolution step prunes and with what scale new ones start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionPolicy {
    pub zeta: f64,
    pub regrow_init_scale: f64,
}

impl Default for EvolutionPolicy {
    fn default() -> Self {
        EvolutionPolicy { zeta: DEFAULT_ZETA, regrow_init_scale: DEFAULT_INIT_SCALE }
    }
}

impl EvolutionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::InvalidConfig("zeta must lie in (0, 1)".into()));
        }
        if !(self.regrow_init_scale.is_finite() && self.regrow_init_scale >= 0.0) {
            return Err(Error::InvalidConfig("regrow_init_scale must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Gradients aligned with a layer's connection order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
struct Cache {
    input: Matrix,
    pre: Matrix,
    out: Matrix,
}

/// Serialized form: the connection triples plus bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseLayerRecord {
    pub n_in: usize,
    pub n_out: usize,
    pub epsilon: f64,
    pub activation: Activation,
    pub connections: Vec<(u32, u32, f64)>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SparseLayerRecord", into = "SparseLayerRecord")]
pub struct SparseLayer {
    n_in: usize,
    n_out: usize,
    epsilon: f64,
    activation: Activation,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
    bias: Vec<f64>,
    grads: SparseGrads,
    cache: Option<Cache>,
}

/// Counts from one evolution step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvolutionOutcome {
    pub removed_positive: usize,
    pub removed_negative: usize,
    pub regrown: usize,
}

impl SparseLayer {
    /// Builds a layer from `(in, out, weight)` triples in any order.
    pub fn from_connections(
        n_in: usize,
        n_out: usize,
        epsilon: f64,
        activation: Activation,
        mut connections: Vec<(u32, u32, f64)>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::InvalidLayer("layer widths must be >= 1".into()));
        }
        if bias.len() != n_out {
            return Err(Error::ShapeMismatch { context: "sparse bias", expected: n_out, found: bias.len() });
        }
        if connections.is_empty() {
            return Err(Error::InvalidLayer("a sparse layer needs at least one connection".into()));
        }
        if !bias.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidLayer("non-finite bias".into()));
        }
        connections.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n_in + 1];
        let mut cols = Vec::with_capacity(connections.len());
        let mut weights = Vec::with_capacity(connections.len());
        let mut prev: Option<(u32, u32)> = None;
        for &(i, j, w) in &connections {
            if i as usize >= n_in || j as usize >= n_out {
                return Err(Error::InvalidLayer(alloc::format!("connection ({i}, {j}) out of range")));
            }
            if prev == Some((i, j)) {
                return Err(Error::InvalidLayer(alloc::format!("duplicate connection ({i}, {j})")));
            }
            if !w.is_finite() {
                return Err(Error::InvalidLayer(alloc::format!("non-finite weight at ({i}, {j})")));
            }
            prev = Some((i, j));
            row_ptr[i as usize + 1] += 1;
            cols.push(j);
            weights.push(w);
        }
        for i in 0..n_in {
            row_ptr[i + 1] += row_ptr[i];
        }
        let grads = SparseGrads { weights: vec![0.0; weights.len()], bias: vec![0.0; n_out] };
        Ok(SparseLayer { n_in, n_out, epsilon, activation, row_ptr, cols, weights, bias, grads, cache: None })
    }

    /// Every possible edge is kept independently with probability
    /// `min(1, epsilon * (n_in + n_out) / (n_in * n_out))`; kept weights are
    /// drawn from `N(0, init_scale^2)`. An empty draw is retried on derived
    /// streams.
    pub fn erdos_renyi(
        n_in: usize,
        n_out: usize,
        epsilon: f64,
        activation: Activation,
        init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 || !(epsilon > 0.0) {
            return Err(Error::InvalidLayer("n_in, n_out >= 1 and epsilon > 0 required".into()));
        }
        let p = edge_probability(n_in, n_out, epsilon);
        let normal = Normal::new(0.0, init_scale).map_err(|_| Error::InvalidConfig("bad init scale".into()))?;
        for attempt in 0..MAX_INIT_ATTEMPTS {
            let mut r = rng::stream(seed, Purpose::InitRetry, attempt);
            let mut conns = Vec::new();
            for i in 0..n_in as u32 {
                for j in 0..n_out as u32 {
                    if r.random::<f64>() < p {
                        conns.push((i, j, normal.sample(&mut r)));
                    }
                }
            }
            if !conns.is_empty() {
                return Self::from_connections(n_in, n_out, epsilon, activation, conns, vec![0.0; n_out]);
            }
        }
        Err(Error::DegenerateLayer { n_in, n_out, epsilon })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn connection_count(&self) -> usize {
        self.weights.len()
    }

    pub fn density(&self) -> f64 {
        self.weights.len() as f64 / (self.n_in * self.n_out) as f64
    }

    /// Weights in connection order (row-major by input index).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn gradients(&self) -> &SparseGrads {
        &self.grads
    }

    /// `(in, out, weight)` in connection order.
    pub fn connections(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_in).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k] as usize, self.weights[k]))
        })
    }

    pub(crate) fn params_and_grads(&mut self) -> [(&mut [f64], &[f64]); 2] {
        [(&mut self.weights, &self.grads.weights), (&mut self.bias, &self.grads.bias)]
    }

    pub fn forward(&mut self, input: &Matrix, mode: Mode) -> Result<Matrix> {
        if input.cols() != self.n_in {
            return Err(Error::ShapeMismatch { context: "sparse forward", expected: self.n_in, found: input.cols() });
        }
        let batch = input.rows();
        let mut pre = Matrix::zeros(batch, self.n_out);
        for b in 0..batch {
            let x = input.row(b);
            let z = pre.row_mut(b);
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
                for (&j, &w) in self.cols[lo..hi].iter().zip(&self.weights[lo..hi]) {
                    z[j as usize] += xi * w;
                }
            }
            for (zj, bj) in z.iter_mut().zip(&self.bias) {
                *zj += bj;
            }
        }
        let act = self.activation;
        let out = pre.map(|z| act.apply(z));
        self.cache = match mode {
            Mode::Train => Some(Cache { input: input.clone(), pre, out: out.clone() }),
            Mode::Eval => None,
        };
        Ok(out)
    }

    /// Computes connection and bias gradients (kept on the layer, see
    /// [`gradients`](Self::gradients)) and returns the gradient with respect
    /// to the input.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        self.backward_impl(grad_out, true).map(|g| g.expect("input gradient requested"))
    }

    pub(crate) fn backward_impl(&mut self, grad_out: &Matrix, need_input_grad: bool) -> Result<Option<Matrix>> {
        let cache = self.cache.as_ref().ok_or(Error::NoCachedForward)?;
        if grad_out.rows() != cache.input.rows() {
            return Err(Error::ShapeMismatch { context: "sparse backward batch", expected: cache.input.rows(), found: grad_out.rows() });
        }
        if grad_out.cols() != self.n_out {
            return Err(Error::ShapeMismatch { context: "sparse backward", expected: self.n_out, found: grad_out.cols() });
        }
        let batch = grad_out.rows();
        let act = self.activation;
        let mut delta = grad_out.clone();
        for ((d, &z), &a) in delta.as_mut_slice().iter_mut().zip(cache.pre.as_slice()).zip(cache.out.as_slice()) {
            *d *= act.derivative(z, a);
        }
        self.grads.weights.clear();
        self.grads.weights.resize(self.weights.len(), 0.0);
        self.grads.bias.clear();
        self.grads.bias.resize(self.n_out, 0.0);
        let mut grad_in = if need_input_grad { Some(Matrix::zeros(batch, self.n_in)) } else { None };
        for b in 0..batch {
            let x = cache.input.row(b);
            let d = delta.row(b);
            for (gb, dj) in self.grads.bias.iter_mut().zip(d) {
                *gb += dj;
            }
            for i in 0..self.n_in {
                let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
                let xi = x[i];
                let mut acc = 0.0;
                for k in lo..hi {
                    let dj = d[self.cols[k] as usize];
                    self.grads.weights[k] += xi * dj;
                    acc += self.weights[k] * dj;
                }
                if let Some(g) = grad_in.as_mut() {
                    g[(b, i)] = acc;
                }
            }
        }
        Ok(grad_in)
    }

    /// `w <- w - lr * g` for every connection and bias.
    pub fn sgd_step(&mut self, grads: &SparseGrads, learning_rate: f64) -> Result<()> {
        if grads.weights.len() != self.weights.len() {
            return Err(Error::ShapeMismatch { context: "sparse sgd weights", expected: self.weights.len(), found: grads.weights.len() });
        }
        if grads.bias.len() != self.n_out {
            return Err(Error::ShapeMismatch { context: "sparse sgd bias", expected: self.n_out, found: grads.bias.len() });
        }
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            *w -= learning_rate * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grads.bias) {
            *b -= learning_rate * g;
        }
        Ok(())
    }

    /// Prune-and-regrow.
    ///
    /// Weights `>= 0` form the positive class, the rest the negative class.
    /// `floor(zeta * class_size)` connections nearest zero are removed from
    /// each class, and the same total is regrown at positions that were vacant
    /// before the call, chosen uniformly without replacement. The connection
    /// count is unchanged.
    pub fn evolve(&mut self, policy: &EvolutionPolicy, seed: u64) -> Result<EvolutionOutcome> {
        policy.validate()?;
        let mut positive: Vec<usize> = Vec::new();
        let mut negative: Vec<usize> = Vec::new();
        for (k, &w) in self.weights.iter().enumerate() {
            if w >= 0.0 {
                positive.push(k);
            } else {
                negative.push(k);
            }
        }
        let rm_pos = libm::floor(policy.zeta * positive.len() as f64) as usize;
        let rm_neg = libm::floor(policy.zeta * negative.len() as f64) as usize;
        let total = rm_pos + rm_neg;
        let outcome = EvolutionOutcome { removed_positive: rm_pos, removed_negative: rm_neg, regrown: total };
        if total == 0 {
            return Ok(outcome);
        }
        let positions = self.n_in * self.n_out;
        let vacant = positions - self.weights.len();
        if vacant < total {
            return Err(Error::NoVacantPositions { needed: total, available: vacant });
        }

        // Stable sorts keep ties in connection order.
        positive.sort_by(|&a, &b| self.weights[a].total_cmp(&self.weights[b]));
        negative.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]));
        let mut removed = vec![false; self.weights.len()];
        for &k in positive[..rm_pos].iter().chain(&negative[..rm_neg]) {
            removed[k] = true;
        }

        let mut occupied = vec![false; positions];
        for (i, j, _) in self.connections() {
            occupied[i * self.n_out + j] = true;
        }
        let mut free: Vec<u32> = (0..positions as u32).filter(|&p| !occupied[p as usize]).collect();
        let mut r = rng::stream(seed, Purpose::Evolution, 0);
        let (chosen, _) = free.partial_shuffle(&mut r, total);
        let normal = Normal::new(0.0, policy.regrow_init_scale).map_err(|_| Error::InvalidConfig("bad regrow scale".into()))?;

        let mut conns: Vec<(u32, u32, f64)> = self
            .connections()
            .zip(&removed)
            .filter(|(_, &gone)| !gone)
            .map(|((i, j, w), _)| (i as u32, j as u32, w))
            .collect();
        for &p in chosen.iter() {
            let p = p as usize;
            conns.push(((p / self.n_out) as u32, (p % self.n_out) as u32, normal.sample(&mut r)));
        }
        let bias = core::mem::take(&mut self.bias);
        *self = Self::from_connections(self.n_in, self.n_out, self.epsilon, self.activation, conns, bias)?;
        Ok(outcome)
    }
}

impl TryFrom<SparseLayerRecord> for SparseLayer {
    type Error = Error;

    fn try_from(r: SparseLayerRecord) -> Result<Self> {
        SparseLayer::from_connections(r.n_in, r.n_out, r.epsilon, r.activation, r.connections, r.bias)
    }
}

impl From<SparseLayer> for SparseLayerRecord {
    fn from(l: SparseLayer) -> Self {
        SparseLayerRecord {
            n_in: l.n_in,
            n_out: l.n_out,
            epsilon: l.epsilon,
            activation: l.activation,
            connections: l.connections().map(|(i, j, w)| (i as u32, j as u32, w)).collect(),
            bias: l.bias,
        }
    }
}
