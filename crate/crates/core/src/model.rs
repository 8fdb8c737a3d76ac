//! The six experiment networks: DNN, CNN and RNN, each dense or with sparse
//! (SET) hidden layers.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::activation::{sigmoid, Activation};
use crate::error::{Error, Result};
use crate::layers::{ActivationLayer, BatchNorm, Conv1d, DenseLayer, Dropout, Elman, Layer, MaxPool1d};
use crate::loss::bce_with_logits;
use crate::matrix::Matrix;
use crate::rng::{derive_seed, Purpose};
use crate::sparse::{EvolutionOutcome, EvolutionPolicy, SparseLayer, DEFAULT_EPSILON, DEFAULT_INIT_SCALE};
use crate::synthesis::WINDOW_LEN;
use crate::{Mode, NUM_APPLIANCES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dnn,
    Cnn,
    Rnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Dnn, ModelKind::Cnn, ModelKind::Rnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dnn => "dnn",
            ModelKind::Cnn => "cnn",
            ModelKind::Rnn => "rnn",
        }
    }
}

impl core::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dnn" => Ok(ModelKind::Dnn),
            "cnn" => Ok(ModelKind::Cnn),
            "rnn" => Ok(ModelKind::Rnn),
            other => Err(Error::InvalidSpec(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvSpec {
    pub kernel_len: usize,
    pub num_filters: usize,
    pub pool_len: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec { kernel_len: 9, num_filters: 16, pool_len: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RnnSpec {
    pub hidden_state_dim: usize,
    pub chunk_len: usize,
}

impl Default for RnnSpec {
    fn default() -> Self {
        RnnSpec { hidden_state_dim: 32, chunk_len: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub sparse: bool,
    pub input_len: usize,
    pub hidden_sizes: [usize; 2],
    pub output_dim: usize,
    pub conv: Option<ConvSpec>,
    pub dropout_rate: f64,
    pub rnn: Option<RnnSpec>,
    /// Erdős–Rényi sparsity coefficient for sparse hidden layers.
    pub epsilon: f64,
    /// Standard deviation of initial sparse weights.
    pub sparse_init_scale: f64,
}

impl ModelSpec {
    /// Default architecture for `kind`.
    pub fn new(kind: ModelKind, sparse: bool) -> Self {
        ModelSpec {
            kind,
            sparse,
            input_len: WINDOW_LEN,
            hidden_sizes: [64, 64],
            output_dim: NUM_APPLIANCES,
            conv: (kind == ModelKind::Cnn).then(ConvSpec::default),
            dropout_rate: 0.2,
            rnn: (kind == ModelKind::Rnn).then(RnnSpec::default),
            epsilon: DEFAULT_EPSILON,
            sparse_init_scale: DEFAULT_INIT_SCALE,
        }
    }

    /// `dnn`, `set-dnn`, `cnn`, ...
    pub fn name(&self) -> String {
        if self.sparse {
            format!("set-{}", self.kind.as_str())
        } else {
            String::from(self.kind.as_str())
        }
    }

    /// The six grid cells, dense before sparse within each kind.
    pub fn grid() -> Vec<ModelSpec> {
        ModelKind::ALL.iter().flat_map(|&k| [ModelSpec::new(k, false), ModelSpec::new(k, true)]).collect()
    }

    /// Width entering the first fully connected layer.
    pub fn feature_width(&self) -> Result<usize> {
        self.validate()?;
        Ok(match self.kind {
            ModelKind::Dnn => self.input_len,
            ModelKind::Cnn => {
                let c = self.conv.expect("validated");
                c.num_filters * ((self.input_len - c.kernel_len + 1) / c.pool_len)
            }
            ModelKind::Rnn => self.rnn.expect("validated").hidden_state_dim,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.input_len == 0 {
            return bad("input_len must be >= 1".into());
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden sizes must be >= 1".into());
        }
        if self.output_dim != NUM_APPLIANCES {
            return bad(format!("output_dim must be {NUM_APPLIANCES}"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.sparse && !(self.epsilon > 0.0 && self.sparse_init_scale >= 0.0) {
            return bad("sparse layers need epsilon > 0 and a nonnegative init scale".into());
        }
        match self.kind {
            ModelKind::Cnn => {
                let Some(c) = self.conv else { return bad("cnn needs a conv section".into()) };
                if c.kernel_len == 0 || c.kernel_len > self.input_len || c.num_filters == 0 {
                    return bad(format!("kernel_len {} incompatible with input {}", c.kernel_len, self.input_len));
                }
                let conv_out = self.input_len - c.kernel_len + 1;
                if c.pool_len == 0 || c.pool_len > conv_out {
                    return bad(format!("pool_len {} incompatible with conv output {conv_out}", c.pool_len));
                }
            }
            ModelKind::Rnn => {
                let Some(r) = self.rnn else { return bad("rnn needs an rnn section".into()) };
                if r.chunk_len == 0 || r.hidden_state_dim == 0 || self.input_len % r.chunk_len != 0 {
                    return bad(format!("chunk_len {} must divide input {}", r.chunk_len, self.input_len));
                }
            }
            ModelKind::Dnn => {}
        }
        Ok(())
    }
}

/// Sequential stack ending in `output_dim` logits; probabilities are the
/// sigmoid of those logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    spec: ModelSpec,
    layers: Vec<Layer>,
}

impl Network {
    /// - dnn: `fc(h1) relu, fc(h2) relu, fc(4)`
    /// - cnn: `conv1d, batchnorm, relu, maxpool, dropout`, then the dnn stack
    /// - rnn: Elman cell over chunks, final state into the dnn stack
    ///
    /// With `sparse` set the two hidden fully connected layers are
    /// Erdős–Rényi sparse layers; convolution, recurrent and output layers stay dense.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        let seed_for = |k: usize| derive_seed(seed, Purpose::Init, k as u64);
        match spec.kind {
            ModelKind::Dnn => {}
            ModelKind::Cnn => {
                let c = spec.conv.expect("validated");
                let conv = Conv1d::new(spec.input_len, c.kernel_len, c.num_filters, seed_for(0))?;
                let conv_len = conv.output_len();
                let width = conv.output_width();
                layers.push(Layer::Conv1d(conv));
                layers.push(Layer::BatchNorm(BatchNorm::new(width)));
                layers.push(Layer::Activation(ActivationLayer::new(Activation::Relu)));
                layers.push(Layer::MaxPool1d(MaxPool1d::new(c.num_filters, conv_len, c.pool_len)?));
                layers.push(Layer::Dropout(Dropout::new(spec.dropout_rate, seed_for(4))?));
            }
            ModelKind::Rnn => {
                let r = spec.rnn.expect("validated");
                layers.push(Layer::Elman(Elman::new(spec.input_len, r.chunk_len, r.hidden_state_dim, seed_for(0))?));
            }
        }
        let mut width = spec.feature_width()?;
        for &h in &spec.hidden_sizes {
            let k = layers.len();
            let layer = if spec.sparse {
                Layer::Sparse(SparseLayer::erdos_renyi(width, h, spec.epsilon, Activation::Relu, spec.sparse_init_scale, seed_for(k))?)
            } else {
                Layer::Dense(DenseLayer::new(width, h, Activation::Relu, seed_for(k)))
            };
            layers.push(layer);
            width = h;
        }
        let k = layers.len();
        layers.push(Layer::Dense(DenseLayer::new(width, spec.output_dim, Activation::Identity, seed_for(k))));
        Ok(Network { spec: spec.clone(), layers })
    }

    /// Wraps explicit layers; used for custom stacks and tests.
    pub fn from_layers(spec: ModelSpec, layers: Vec<Layer>) -> Self {
        Network { spec, layers }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn forward_logits(&mut self, input: &Matrix, mode: Mode) -> Result<Matrix> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x, mode)?;
        }
        Ok(x)
    }

    /// Per-appliance activation probabilities.
    pub fn forward(&mut self, input: &Matrix, mode: Mode) -> Result<Matrix> {
        Ok(self.forward_logits(input, mode)?.map(sigmoid))
    }

    /// Backpropagates a gradient taken at the logits. Every unit keeps its
    /// parameter gradients for [`update`](Self::update).
    pub fn backward(&mut self, grad_logits: &Matrix) -> Result<()> {
        let mut g = grad_logits.clone();
        for (k, layer) in self.layers.iter_mut().enumerate().rev() {
            match layer.backward(&g, k > 0)? {
                Some(next) => g = next,
                None => break,
            }
        }
        Ok(())
    }

    /// Forward in train mode, binary cross-entropy, backward. Returns the
    /// loss and the probabilities.
    pub fn train_step(&mut self, input: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
        let logits = self.forward_logits(input, Mode::Train)?;
        let (loss, grad) = bce_with_logits(&logits, targets)?;
        self.backward(&grad)?;
        Ok((loss, logits.map(sigmoid)))
    }

    pub fn update(&mut self, learning_rate: f64) {
        for layer in &mut self.layers {
            layer.apply_gradients(learning_rate);
        }
    }

    /// Prune-and-regrow on every sparse layer. Layer `k` in epoch `e` uses
    /// the evolution stream `e * 1024 + k` of `seed`.
    pub fn evolve(&mut self, policy: &EvolutionPolicy, seed: u64, epoch: u64) -> Result<Vec<EvolutionOutcome>> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter_mut().enumerate() {
            if let Layer::Sparse(s) = layer {
                out.push(s.evolve(policy, derive_seed(seed, Purpose::Evolution, epoch * 1024 + k as u64))?);
            }
        }
        Ok(out)
    }

    pub fn sparse_connection_counts(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Sparse(s) => Some(s.connection_count()),
                _ => None,
            })
            .collect()
    }

    pub fn param_count(&mut self) -> usize {
        self.layers.iter_mut().map(|l| l.param_count()).sum()
    }

    /// Flattened copy of every parameter, in layer order.
    pub fn parameters(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for (p, _) in layer.params_and_grads() {
                out.extend_from_slice(p);
            }
        }
        out
    }
}
