//! Window extraction, validity filtering and random aggregate synthesis.
//!
//! Each appliance channel is cut into one-hour windows (600 samples at 6 s)
//! advancing by five minutes (50 samples). A window is kept when at least
//! 100 of its samples (ten minutes) draw power. Dataset rows are then built by
//! flipping a fair coin per appliance and summing one randomly chosen valid
//! window of every appliance whose coin came up 1.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Purpose};
use crate::series::RunSeries;
use crate::NUM_APPLIANCES;

pub const WINDOW_LEN: usize = 600;
pub const WINDOW_STEP: usize = 50;
pub const ACTIVE_THRESHOLD: usize = 100;
pub const DEFAULT_REPETITIONS: usize = 10_000;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowParams {
    pub window_len: usize,
    pub step: usize,
    pub active_threshold: usize,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams { window_len: WINDOW_LEN, step: WINDOW_STEP, active_threshold: ACTIVE_THRESHOLD }
    }
}

impl WindowParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.step == 0 {
            return Err(Error::InvalidConfig("window_len and step must be >= 1".into()));
        }
        if self.active_threshold > self.window_len {
            return Err(Error::InvalidConfig("active_threshold exceeds window_len".into()));
        }
        Ok(())
    }
}

/// Windows of `window_len` samples starting at offsets `0, step, 2*step, ...`.
/// A run shorter than `window_len` yields nothing.
pub fn extract_windows(run: &[f64], window_len: usize, step: usize) -> impl Iterator<Item = &[f64]> {
    assert!(window_len >= 1 && step >= 1);
    let count = if run.len() >= window_len { (run.len() - window_len) / step + 1 } else { 0 };
    (0..count).map(move |k| &run[k * step..k * step + window_len])
}

/// Candidate windows of every run, in run order.
pub fn extract_series_windows(series: &RunSeries, window_len: usize, step: usize) -> Vec<&[f64]> {
    series.runs.iter().flat_map(|r| extract_windows(&r.power, window_len, step)).collect()
}

/// True when at least `active_threshold` samples are strictly positive.
pub fn is_valid_window(window: &[f64], active_threshold: usize) -> bool {
    window.iter().filter(|&&p| p > 0.0).count() >= active_threshold
}

/// Valid windows of one appliance, one per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowMatrix {
    pub appliance_id: u8,
    window_len: usize,
    data: Vec<f64>,
}

impl WindowMatrix {
    pub fn from_rows(appliance_id: u8, window_len: usize, rows: &[&[f64]]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * window_len);
        for r in rows {
            if r.len() != window_len {
                return Err(Error::ShapeMismatch { context: "window matrix row", expected: window_len, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(WindowMatrix { appliance_id, window_len, data })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn num_valid(&self) -> usize {
        if self.window_len == 0 {
            0
        } else {
            self.data.len() / self.window_len
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.window_len..(i + 1) * self.window_len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.window_len)
    }
}

pub fn build_window_matrix(series: &RunSeries, params: &WindowParams) -> Result<WindowMatrix> {
    params.validate()?;
    let valid: Vec<&[f64]> = extract_series_windows(series, params.window_len, params.step)
        .into_iter()
        .filter(|w| is_valid_window(w, params.active_threshold))
        .collect();
    if valid.is_empty() {
        return Err(Error::NoValidWindows { appliance: series.appliance_id as usize });
    }
    WindowMatrix::from_rows(series.appliance_id, params.window_len, &valid)
}

/// Which appliances are switched on in a synthetic row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActivationVector(pub [u8; NUM_APPLIANCES]);

impl ActivationVector {
    pub fn draw<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        let mut bits = [0u8; NUM_APPLIANCES];
        for b in &mut bits {
            *b = rng.random_bool(0.5) as u8;
        }
        ActivationVector(bits)
    }

    pub fn is_active(&self, appliance: usize) -> bool {
        self.0[appliance] == 1
    }
}

/// One row index into each appliance's window matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexVector(pub [usize; NUM_APPLIANCES]);

impl IndexVector {
    /// Uniform over `[0, num_valid_i)` for each appliance.
    pub fn draw<R: rand::Rng + ?Sized>(rng: &mut R, num_valid: [usize; NUM_APPLIANCES]) -> Self {
        let mut idx = [0usize; NUM_APPLIANCES];
        for (slot, &n) in idx.iter_mut().zip(&num_valid) {
            *slot = rng.random_range(0..n);
        }
        IndexVector(idx)
    }
}

/// Record of how a dataset was split into train and test rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub train_fraction: f64,
    pub seed: u64,
    pub split_index: usize,
}

/// Aggregate windows with their activation labels, in generation order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub window_len: usize,
    pub features: Vec<f64>,
    pub labels: Vec<ActivationVector>,
    pub seed: u64,
    pub split: Option<SplitInfo>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_row(&self, k: usize) -> &[f64] {
        &self.features[k * self.window_len..(k + 1) * self.window_len]
    }

    pub fn feature_matrix(&self) -> Matrix {
        Matrix::from_vec(self.len(), self.window_len, self.features.clone())
    }

    /// Labels as an `N x 4` matrix of 0.0 / 1.0.
    pub fn label_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.len(), NUM_APPLIANCES);
        for (k, l) in self.labels.iter().enumerate() {
            for (i, &b) in l.0.iter().enumerate() {
                m[(k, i)] = b as f64;
            }
        }
        m
    }

    /// Shuffles row indices with `seed` and cuts at `floor(train_fraction * N)`.
    /// Records the split on the dataset.
    pub fn split(&mut self, train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
        let s = split(self.len(), train_fraction, seed)?;
        self.split = Some(SplitInfo { train_fraction, seed, split_index: s.split_index });
        Ok(s)
    }

    /// Re-derives the split recorded on the dataset.
    pub fn recorded_split(&self) -> Result<DatasetSplit> {
        let info = self.split.ok_or_else(|| Error::InvalidConfig("dataset has no recorded split".into()))?;
        split(self.len(), info.train_fraction, info.seed)
    }
}

/// Disjoint train/test row indices covering the dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub split_index: usize,
}

pub fn split(n: usize, train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig("train_fraction must lie in (0, 1)".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::Split, 0));
    let split_index = libm::floor(train_fraction * n as f64) as usize;
    let test = order.split_off(split_index);
    Ok(DatasetSplit { train: order, test, split_index })
}

/// Draws the activation and index vectors of row `k`. Row `k` reads only its
/// own stream, `(seed, Synthesis, k)`: four coin flips, then four indices.
pub fn draw_row(seed: u64, k: u64, num_valid: [usize; NUM_APPLIANCES]) -> (ActivationVector, IndexVector) {
    let mut r = rng::stream(seed, Purpose::Synthesis, k);
    let act = ActivationVector::draw(&mut r);
    let idx = IndexVector::draw(&mut r, num_valid);
    (act, idx)
}

pub fn synthesize(matrices: &[WindowMatrix; NUM_APPLIANCES], repetitions: usize, seed: u64) -> Result<SyntheticDataset> {
    if repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
    }
    let window_len = matrices[0].window_len();
    let mut num_valid = [0usize; NUM_APPLIANCES];
    for (i, m) in matrices.iter().enumerate() {
        if m.num_valid() == 0 {
            return Err(Error::EmptyMatrix { appliance: i });
        }
        if m.window_len() != window_len {
            return Err(Error::ShapeMismatch { context: "window length", expected: window_len, found: m.window_len() });
        }
        num_valid[i] = m.num_valid();
    }
    let mut features = Vec::with_capacity(repetitions * window_len);
    let mut labels = Vec::with_capacity(repetitions);
    for k in 0..repetitions {
        let (act, idx) = draw_row(seed, k as u64, num_valid);
        let start = features.len();
        features.resize(start + window_len, 0.0);
        let row = &mut features[start..];
        for (i, m) in matrices.iter().enumerate() {
            if act.is_active(i) {
                for (acc, v) in row.iter_mut().zip(m.row(idx.0[i])) {
                    *acc += v;
                }
            }
        }
        labels.push(act);
    }
    Ok(SyntheticDataset { window_len, features, labels, seed, split: None })
}
