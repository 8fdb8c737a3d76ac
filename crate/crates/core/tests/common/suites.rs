//! Oracle suites shared by the unit-level tests and the acceptance run.

use nilm_core::activation::Activation;
use nilm_core::layers::{ActivationLayer, BatchNorm, Conv1d, DenseLayer, Dropout, Elman, Layer, MaxPool1d};
use nilm_core::metrics::evaluate_predictions;
use nilm_core::model::{ConvSpec, ModelKind, ModelSpec, Network, RnnSpec};
use nilm_core::rng::{stream, Purpose};
use nilm_core::sparse::SparseLayer;
use nilm_core::synthesis::{extract_windows, is_valid_window, SyntheticDataset, WindowMatrix};
use nilm_core::{Matrix, Mode};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_layer, check_network, random_matrix, rng};

pub const GRAD_FLOOR: f64 = 1e-6;
pub const GRAD_INSTANCES: u64 = 20;

const ACTS: [Activation; 4] = [Activation::Relu, Activation::Sigmoid, Activation::Tanh, Activation::Identity];

fn randomize(layer: &mut Layer, r: &mut ChaCha8Rng) {
    for (p, _) in layer.params_and_grads() {
        for v in p.iter_mut() {
            *v = r.random_range(-1.0..1.0);
        }
    }
}

type Maker = Box<dyn Fn(u64) -> (Layer, usize, usize)>;

fn layer_makers() -> Vec<(String, Maker)> {
    let mut out: Vec<(String, Maker)> = vec![
        ("dense".into(), Box::new(|s| (Layer::Dense(DenseLayer::new(7, 5, ACTS[s as usize % 4], s)), 7, 5))),
        ("conv1d".into(), Box::new(|s| (Layer::Conv1d(Conv1d::new(12, 4, 3, s).unwrap()), 12, 3 * 9))),
        ("batchnorm".into(), Box::new(|_| (Layer::BatchNorm(BatchNorm::new(6)), 6, 6))),
        ("maxpool".into(), Box::new(|_| (Layer::MaxPool1d(MaxPool1d::new(2, 7, 3).unwrap()), 14, 4))),
        ("dropout".into(), Box::new(|s| (Layer::Dropout(Dropout::new(0.3, s).unwrap()), 10, 10))),
        ("activation".into(), Box::new(|s| (Layer::Activation(ActivationLayer::new(ACTS[s as usize % 4])), 6, 6))),
        ("elman".into(), Box::new(|s| (Layer::Elman(Elman::new(12, 3, 4, s).unwrap()), 12, 4))),
    ];
    for act in ACTS {
        out.push((
            format!("sparse/{act:?}").to_lowercase(),
            Box::new(move |s| (Layer::Sparse(SparseLayer::erdos_renyi(7, 5, 2.0, act, 0.5, s).unwrap()), 7, 5)),
        ));
    }
    out
}

/// Worst relative error per layer type over `GRAD_INSTANCES` random
/// instances, every parameter and every input.
pub fn layer_gradient_suite() -> Vec<(String, f64)> {
    layer_makers()
        .into_iter()
        .map(|(name, make)| {
            let mut worst: f64 = 0.0;
            for seed in 0..GRAD_INSTANCES {
                let mut r = rng(1000 + seed);
                let (mut layer, n_in, n_out) = make(seed);
                randomize(&mut layer, &mut r);
                let x = random_matrix(&mut r, 3, n_in, 1.0);
                let proj = random_matrix(&mut r, 3, n_out, 1.0);
                worst = worst.max(check_layer(&layer, &x, &proj, GRAD_FLOOR));
            }
            (name, worst)
        })
        .collect()
}

pub fn small_spec(kind: ModelKind, sparse: bool) -> ModelSpec {
    let mut spec = ModelSpec::new(kind, sparse);
    spec.input_len = 24;
    spec.hidden_sizes = [6, 5];
    spec.epsilon = 1.5;
    spec.sparse_init_scale = 0.5;
    if kind == ModelKind::Cnn {
        spec.conv = Some(ConvSpec { kernel_len: 5, num_filters: 3, pool_len: 2 });
    }
    if kind == ModelKind::Rnn {
        spec.rnn = Some(RnnSpec { hidden_state_dim: 5, chunk_len: 4 });
    }
    spec
}

/// Worst relative error of the full training loss gradient for each of the
/// six (small) architectures on 5-sample batches.
pub fn network_gradient_suite() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for kind in ModelKind::ALL {
        for sparse in [false, true] {
            let spec = small_spec(kind, sparse);
            let mut worst: f64 = 0.0;
            for seed in 0..GRAD_INSTANCES {
                let mut net = Network::build(&spec, seed).unwrap();
                let mut r = rng(5000 + seed);
                // zero biases put dead-ReLU samples exactly on a kink
                for layer in net.layers_mut() {
                    for (p, _) in layer.params_and_grads() {
                        p.iter_mut().for_each(|v| *v += r.random_range(-0.1..0.1));
                    }
                }
                let x = random_matrix(&mut r, 5, spec.input_len, 1.0);
                let y = Matrix::from_vec(5, 4, (0..20).map(|_| r.random_range(0..2) as f64).collect());
                worst = worst.max(check_network(&net, &x, &y, GRAD_FLOOR));
            }
            out.push((spec.name(), worst));
        }
    }
    out
}

/// Straightforward dense layer used as the reference for fully connected sparse layers.
pub struct DenseOracle {
    n_in: usize,
    n_out: usize,
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Activation,
}

impl DenseOracle {
    pub fn from_sparse(l: &SparseLayer) -> Self {
        let mut w = vec![vec![0.0; l.n_out()]; l.n_in()];
        for (i, j, v) in l.connections() {
            w[i][j] = v;
        }
        DenseOracle { n_in: l.n_in(), n_out: l.n_out(), w, b: l.bias().to_vec(), act: l.activation() }
    }

    fn pre(&self, x: &Matrix) -> Vec<Vec<f64>> {
        (0..x.rows())
            .map(|r| {
                (0..self.n_out)
                    .map(|j| {
                        let mut s = 0.0;
                        for i in 0..self.n_in {
                            s += x[(r, i)] * self.w[i][j];
                        }
                        s + self.b[j]
                    })
                    .collect()
            })
            .collect()
    }

    pub fn forward(&self, x: &Matrix) -> Vec<Vec<f64>> {
        self.pre(x).into_iter().map(|row| row.into_iter().map(|z| self.act.apply(z)).collect()).collect()
    }

    /// (grad_in, grad_w, grad_b)
    pub fn backward(&self, x: &Matrix, g: &Matrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let pre = self.pre(x);
        let delta: Vec<Vec<f64>> = (0..x.rows())
            .map(|r| (0..self.n_out).map(|j| g[(r, j)] * self.act.derivative(pre[r][j], self.act.apply(pre[r][j]))).collect())
            .collect();
        let mut gw = vec![vec![0.0; self.n_out]; self.n_in];
        let mut gb = vec![0.0; self.n_out];
        let mut gi = vec![vec![0.0; self.n_in]; x.rows()];
        for r in 0..x.rows() {
            for j in 0..self.n_out {
                gb[j] += delta[r][j];
                for i in 0..self.n_in {
                    gw[i][j] += x[(r, i)] * delta[r][j];
                    gi[r][i] += self.w[i][j] * delta[r][j];
                }
            }
        }
        (gi, gw, gb)
    }
}

/// Largest absolute deviation between a fully connected sparse layer and the
/// dense oracle over forward output, input, weight and bias gradients.
pub fn dense_equivalence_worst(cases: u64) -> f64 {
    const EQ_ACTS: [Activation; 3] = [Activation::Relu, Activation::Sigmoid, Activation::Identity];
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let mut r = rng(case);
        let n_in = 1 + (case as usize * 7) % 13;
        let n_out = 1 + (case as usize * 5) % 11;
        let act = EQ_ACTS[case as usize % 3];
        let layer = SparseLayer::erdos_renyi(n_in, n_out, 1e6, act, 0.7, case).unwrap();
        assert_eq!(layer.connection_count(), n_in * n_out);
        let bias = random_matrix(&mut r, 1, n_out, 0.5);
        let conns: Vec<(u32, u32, f64)> = layer.connections().map(|(i, j, w)| (i as u32, j as u32, w)).collect();
        let mut layer = SparseLayer::from_connections(n_in, n_out, 1e6, act, conns, bias.as_slice().to_vec()).unwrap();
        let oracle = DenseOracle::from_sparse(&layer);

        let x = random_matrix(&mut r, 4, n_in, 2.0);
        let g = random_matrix(&mut r, 4, n_out, 1.0);
        let out = layer.forward(&x, Mode::Train).unwrap();
        let gin = layer.backward(&g).unwrap();
        let expected = oracle.forward(&x);
        let (ogi, ogw, ogb) = oracle.backward(&x, &g);
        for rr in 0..4 {
            for j in 0..n_out {
                worst = worst.max((out[(rr, j)] - expected[rr][j]).abs());
            }
            for i in 0..n_in {
                worst = worst.max((gin[(rr, i)] - ogi[rr][i]).abs());
            }
        }
        for (k, (i, j, _)) in layer.connections().enumerate() {
            worst = worst.max((layer.gradients().weights[k] - ogw[i][j]).abs());
        }
        for j in 0..n_out {
            worst = worst.max((layer.gradients().bias[j] - ogb[j]).abs());
        }
    }
    worst
}

/// Random window matrices with 1..40 rows of `window_len` samples each.
pub fn random_window_matrices(seed: u64, window_len: usize) -> [WindowMatrix; 4] {
    let mut r = rng(seed);
    std::array::from_fn(|i| {
        let n = r.random_range(1..40);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..window_len).map(|_| r.random_range(0.0..2.5)).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|v| v.as_slice()).collect();
        WindowMatrix::from_rows(i as u8, window_len, &refs).unwrap()
    })
}

/// Replays row `k` straight from its random stream and re-sums the windows.
pub fn replay_row(matrices: &[WindowMatrix; 4], seed: u64, k: usize) -> (Vec<f64>, [u8; 4]) {
    let mut s = stream(seed, Purpose::Synthesis, k as u64);
    let bits: [u8; 4] = std::array::from_fn(|_| s.random_bool(0.5) as u8);
    let idx: [usize; 4] = std::array::from_fn(|i| s.random_range(0..matrices[i].num_valid()));
    let mut sum = vec![0.0; matrices[0].window_len()];
    for i in 0..4 {
        if bits[i] == 1 {
            for (acc, v) in sum.iter_mut().zip(matrices[i].row(idx[i])) {
                *acc += v;
            }
        }
    }
    (sum, bits)
}

/// Rows in `rows` whose stored features or labels differ from the replay,
/// plus rows with no active appliance that are not exactly zero.
pub fn synthesis_mismatches(ds: &SyntheticDataset, matrices: &[WindowMatrix; 4], rows: impl Iterator<Item = usize>) -> (usize, usize, usize) {
    let (mut bad, mut zero_rows, mut bad_zero) = (0, 0, 0);
    for k in rows {
        let (features, bits) = replay_row(matrices, ds.seed, k);
        let same = ds.labels[k].0 == bits && ds.feature_row(k).iter().zip(&features).all(|(a, b)| a.to_bits() == b.to_bits());
        bad += !same as usize;
        if bits == [0; 4] {
            zero_rows += 1;
            bad_zero += !ds.feature_row(k).iter().all(|v| v.to_bits() == 0) as usize;
        }
    }
    (bad, zero_rows, bad_zero)
}

/// Chi-square statistic (1 dof) of each label column against a fair coin.
pub fn label_chi2(ds: &SyntheticDataset) -> [f64; 4] {
    let n = ds.len() as f64;
    std::array::from_fn(|i| {
        let ones = ds.labels.iter().filter(|l| l.0[i] == 1).count() as f64;
        let e = n / 2.0;
        (ones - e).powi(2) / e + (n - ones - e).powi(2) / e
    })
}

/// Chi-square critical value for 1 dof at p = 0.001.
pub const CHI2_CRITICAL_P001: f64 = 10.828;

/// Number of random run lengths whose window count differs from
/// `floor((len - window) / step) + 1` (0 for runs shorter than a window).
pub fn window_count_mismatches(cases: usize, window: usize, step: usize) -> usize {
    let mut r = rng(77);
    (0..cases)
        .filter(|_| {
            let len = r.random_range(0..5000);
            let expected = if len >= window { (len - window) / step + 1 } else { 0 };
            extract_windows(&vec![0.0; len], window, step).count() != expected
        })
        .count()
}

/// Windows with exactly `threshold - 1` and `threshold` positive samples at
/// random positions; returns how many were classified wrongly.
pub fn threshold_boundary_mismatches(cases: usize, window: usize, threshold: usize) -> usize {
    let mut r = rng(3);
    let mut wrong = 0;
    for _ in 0..cases {
        let mut w = vec![0.0; window];
        let mut slots: Vec<usize> = (0..window).collect();
        for k in 0..threshold {
            let pick = r.random_range(k..window);
            slots.swap(k, pick);
        }
        for &s in &slots[..threshold - 1] {
            w[s] = r.random_range(1e-6..3.0);
        }
        wrong += is_valid_window(&w, threshold) as usize;
        w[slots[threshold - 1]] = 1e-9;
        wrong += !is_valid_window(&w, threshold) as usize;
    }
    wrong
}

struct Expected {
    precision: f64,
    recall: f64,
    accuracy: f64,
    mae: f64,
}

/// Counts each cell by filtering the (prediction, label) pairs separately.
fn brute_force(p: &[f64], y: &[f64]) -> Expected {
    let pairs: Vec<(bool, bool)> = p.iter().zip(y).map(|(&p, &y)| (p >= 0.5, y == 1.0)).collect();
    let count = |want: (bool, bool)| pairs.iter().filter(|&&c| c == want).count() as f64;
    let (tp, fp, fn_, tn) = (count((true, true)), count((true, false)), count((false, true)), count((false, false)));
    Expected {
        precision: if tp + fp == 0.0 { 1.0 } else { tp / (tp + fp) },
        recall: if tp + fn_ == 0.0 { 1.0 } else { tp / (tp + fn_) },
        accuracy: (tp + tn) / pairs.len() as f64,
        mae: p.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64,
    }
}

pub fn metrics_fixture(seed: u64, rows: usize) -> (Matrix, Matrix) {
    let mut r = rng(seed);
    // some fixtures put probabilities exactly on the threshold, some lack positives
    let all_negative = seed % 7 == 0;
    let mut p = Vec::new();
    let mut y = Vec::new();
    for _ in 0..rows * 4 {
        p.push(match r.random_range(0..10) {
            0 => 0.5,
            _ => r.random_range(0.0..1.0),
        });
        y.push(if all_negative { 0.0 } else { r.random_range(0..2) as f64 });
    }
    (Matrix::from_vec(rows, 4, p), Matrix::from_vec(rows, 4, y))
}

/// Fixtures on which any metric differs from the brute-force count.
pub fn metrics_mismatches(fixtures: u64, rows: usize) -> usize {
    let mut bad = 0;
    for seed in 0..fixtures {
        let (p, y) = metrics_fixture(seed, rows);
        let m = evaluate_predictions(&p, &y, 0.5);
        let mut ok = true;
        let mut micro = 0.0;
        for i in 0..4 {
            let pc: Vec<f64> = (0..rows).map(|r| p[(r, i)]).collect();
            let yc: Vec<f64> = (0..rows).map(|r| y[(r, i)]).collect();
            let e = brute_force(&pc, &yc);
            let a = &m.per_appliance[i];
            ok &= a.precision == e.precision && a.recall == e.recall && a.accuracy == e.accuracy;
            ok &= (a.mae - e.mae).abs() <= 1e-12;
            micro += e.accuracy;
        }
        let exact = (0..rows).filter(|&r| (0..4).all(|i| (p[(r, i)] >= 0.5) == (y[(r, i)] == 1.0))).count();
        ok &= (m.micro_accuracy - micro / 4.0).abs() <= 1e-12;
        ok &= m.exact_match_accuracy == exact as f64 / rows as f64;
        bad += !ok as usize;
    }
    bad
}
