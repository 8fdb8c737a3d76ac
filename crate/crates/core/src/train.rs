//! Minibatch SGD with per-epoch prune-and-regrow, plus the experiment grid.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::bce_with_logits;
use crate::matrix::Matrix;
use crate::metrics::{evaluate_predictions, Metrics, DEFAULT_THRESHOLD};
use crate::model::{ModelSpec, Network};
use crate::rng::{self, Purpose};
use crate::sparse::EvolutionPolicy;
use crate::synthesis::SyntheticDataset;
use crate::{Mode, NUM_APPLIANCES};

const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Applied after every epoch; must be set exactly when the network has sparse layers.
    pub evolution: Option<EvolutionPolicy>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 50, batch_size: 64, learning_rate: 0.01, seed: 0, evolution: None }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be finite and >= 0".into()));
        }
        if let Some(p) = &self.evolution {
            p.validate()?;
        }
        Ok(())
    }

    /// Copy with `evolution` set for sparse specs and cleared for dense ones.
    pub fn for_spec(&self, spec: &ModelSpec, policy: EvolutionPolicy) -> TrainConfig {
        TrainConfig { evolution: spec.sparse.then_some(policy), ..self.clone() }
    }
}

/// Standardised inputs with 0/1 targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub features: Matrix,
    pub targets: Matrix,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

/// Default scale (kW) of the `log1p(x / scale)` input compression.
pub const DEFAULT_LOG_SCALE_KW: f64 = 0.01;

/// Optional `log1p(x / log_scale)` compression followed by a per-feature
/// z-score fitted on training rows. Constant features get unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub log_scale: Option<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix, log_scale: Option<f64>) -> Self {
        let x = &compress(x, log_scale);
        let n = x.rows().max(1) as f64;
        let mut mean = alloc::vec![0.0; x.cols()];
        for r in x.row_iter() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; x.cols()];
        for r in x.row_iter() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| libm::sqrt(s / n)).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Standardizer { log_scale, mean, std }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = compress(x, self.log_scale);
        for b in 0..out.rows() {
            for ((v, m), s) in out.row_mut(b).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

fn compress(x: &Matrix, log_scale: Option<f64>) -> Matrix {
    match log_scale {
        Some(s) => x.map(|v| libm::log1p(v.max(0.0) / s)),
        None => x.clone(),
    }
}

/// Train and test samples from the dataset's recorded split, compressed with
/// the default log scale and standardised with train-split statistics.
pub fn prepare(dataset: &SyntheticDataset) -> Result<(Samples, Samples, Standardizer)> {
    prepare_with(dataset, Some(DEFAULT_LOG_SCALE_KW))
}

/// [`prepare`] with an explicit compression scale; `None` skips compression.
pub fn prepare_with(dataset: &SyntheticDataset, log_scale: Option<f64>) -> Result<(Samples, Samples, Standardizer)> {
    if log_scale.is_some_and(|s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidConfig("log scale must be finite and > 0".into()));
    }
    let split = dataset.recorded_split()?;
    let x = dataset.feature_matrix();
    let y = dataset.label_matrix();
    let x_train = x.select_rows(&split.train);
    let scaler = Standardizer::fit(&x_train, log_scale);
    let train = Samples { features: scaler.apply(&x_train), targets: y.select_rows(&split.train) };
    let test = Samples { features: scaler.apply(&x.select_rows(&split.test)), targets: y.select_rows(&split.test) };
    Ok((train, test, scaler))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub test_loss_per_appliance: Vec<f64>,
    pub test_accuracy_per_appliance: Vec<f64>,
    /// Connection count of each sparse layer after this epoch's evolution.
    pub sparse_connections: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    Diverged { epoch: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub split_index: Option<usize>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub initial_sparse_connections: Vec<usize>,
    pub epochs: Vec<EpochRecord>,
    pub final_metrics: Option<Metrics>,
    pub status: TrainStatus,
    /// Wall-clock seconds per epoch, when the caller measured them. Not
    /// serialized, so reports stay reproducible.
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

impl TrainReport {
    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.test_accuracy)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] Error),
    #[error("loss became non-finite in epoch {}", .0.epochs.len())]
    Diverged(Box<TrainReport>),
}

/// Loss and metrics of `network` in eval mode.
pub fn evaluate(network: &mut Network, samples: &Samples, threshold: f64) -> Result<(f64, Metrics)> {
    let logits = predict_logits(network, &samples.features)?;
    let (loss, _) = bce_with_logits(&logits, &samples.targets)?;
    let probs = logits.map(crate::activation::sigmoid);
    Ok((loss, evaluate_predictions(&probs, &samples.targets, threshold)))
}

/// Eval-mode logits, computed in chunks.
pub fn predict_logits(network: &mut Network, x: &Matrix) -> Result<Matrix> {
    let mut out = Vec::with_capacity(x.rows() * NUM_APPLIANCES);
    let mut cols = NUM_APPLIANCES;
    let idx: Vec<usize> = (0..x.rows()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let l = network.forward_logits(&x.select_rows(chunk), Mode::Eval)?;
        cols = l.cols();
        out.extend_from_slice(l.as_slice());
    }
    Ok(Matrix::from_vec(x.rows(), cols, out))
}

/// Per-appliance binary cross-entropy of eval-mode logits.
fn per_appliance_loss(logits: &Matrix, targets: &Matrix) -> Vec<f64> {
    let n = logits.rows().max(1) as f64;
    let mut out = alloc::vec![0.0; logits.cols()];
    for r in 0..logits.rows() {
        for (i, o) in out.iter_mut().enumerate() {
            let z = logits[(r, i)];
            let y = targets[(r, i)];
            *o += z.max(0.0) - z * y + libm::log1p(libm::exp(-z.abs()));
        }
    }
    out.iter().map(|v| v / n).collect()
}

/// Minibatch order for one epoch. A trailing batch of one row is folded into
/// the previous batch so batch norm always sees at least two samples.
fn minibatches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::EpochShuffle, epoch as u64));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("nonempty");
        batches.last_mut().expect("nonempty").extend(last);
    }
    batches
}

/// Trains `network` for `config.epochs` epochs. After each epoch's updates,
/// sparse layers are evolved (when a policy is set) and the test split is
/// evaluated. `on_epoch` sees every record as soon as it exists.
pub fn train(
    network: &mut Network,
    train: &Samples,
    test: &Samples,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> core::result::Result<TrainReport, TrainError> {
    config.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidConfig("train and test samples must be nonempty".into()).into());
    }
    if train.features.cols() != network.spec().input_len {
        return Err(Error::ShapeMismatch { context: "training features", expected: network.spec().input_len, found: train.features.cols() }.into());
    }
    let has_sparse = !network.sparse_connection_counts().is_empty();
    if has_sparse != config.evolution.is_some() {
        return Err(Error::InvalidConfig("an evolution policy must be set exactly for sparse networks".into()).into());
    }
    let mut report = TrainReport {
        model: network.spec().name(),
        spec: network.spec().clone(),
        config: config.clone(),
        split_index: None,
        train_rows: train.len(),
        test_rows: test.len(),
        initial_sparse_connections: network.sparse_connection_counts(),
        epochs: Vec::with_capacity(config.epochs),
        final_metrics: None,
        status: TrainStatus::Completed,
        epoch_seconds: Vec::new(),
    };
    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in minibatches(train.len(), config.batch_size, config.seed, epoch) {
            let x = train.features.select_rows(&batch);
            let y = train.targets.select_rows(&batch);
            let (loss, probs) = network.train_step(&x, &y)?;
            if !loss.is_finite() {
                report.status = TrainStatus::Diverged { epoch };
                return Err(TrainError::Diverged(Box::new(report)));
            }
            network.update(config.learning_rate);
            loss_sum += loss * batch.len() as f64;
            correct += probs
                .as_slice()
                .iter()
                .zip(y.as_slice())
                .filter(|(&p, &t)| (p >= DEFAULT_THRESHOLD) == (t >= 0.5))
                .count();
        }
        if let Some(policy) = &config.evolution {
            network.evolve(policy, config.seed, epoch as u64)?;
        }
        let logits = predict_logits(network, &test.features)?;
        let (test_loss, _) = bce_with_logits(&logits, &test.targets)?;
        if !test_loss.is_finite() {
            report.status = TrainStatus::Diverged { epoch };
            return Err(TrainError::Diverged(Box::new(report)));
        }
        let metrics = evaluate_predictions(&logits.map(crate::activation::sigmoid), &test.targets, DEFAULT_THRESHOLD);
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / (train.len() * train.targets.cols()) as f64,
            test_loss,
            test_accuracy: metrics.micro_accuracy,
            test_loss_per_appliance: per_appliance_loss(&logits, &test.targets),
            test_accuracy_per_appliance: metrics.per_appliance.iter().map(|a| a.accuracy).collect(),
            sparse_connections: network.sparse_connection_counts(),
        };
        on_epoch(&record);
        report.epochs.push(record);
        report.final_metrics = Some(metrics);
    }
    Ok(report)
}

/// Trains every spec on the dataset's recorded split with the same seeds,
/// in spec order. Sparse specs evolve with `policy`.
pub fn run_experiment_grid(
    dataset: &SyntheticDataset,
    specs: &[ModelSpec],
    config: &TrainConfig,
    policy: EvolutionPolicy,
) -> core::result::Result<Vec<TrainReport>, TrainError> {
    let (train_set, test_set, _) = prepare(dataset)?;
    let split_index = dataset.split.map(|s| s.split_index);
    specs
        .iter()
        .map(|spec| {
            let mut net = Network::build(spec, config.seed)?;
            let mut report = train(&mut net, &train_set, &test_set, &config.for_spec(spec, policy), |_| {})?;
            report.split_index = split_index;
            Ok(report)
        })
        .collect()
}
