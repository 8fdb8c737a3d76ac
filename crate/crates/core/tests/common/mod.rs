#![allow(dead_code)]

pub mod suites;

use nilm_core::layers::Layer;
use nilm_core::loss::bce_with_logits;
use nilm_core::model::Network;
use nilm_core::{Matrix, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0) * scale).collect())
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Scalar probe loss `sum(out * proj)`; its gradient w.r.t. the output is `proj`.
fn probe(layer: &mut Layer, x: &Matrix, proj: &Matrix) -> f64 {
    let out = layer.forward(x, Mode::Train).unwrap();
    out.as_slice().iter().zip(proj.as_slice()).map(|(a, b)| a * b).sum()
}

fn flat_len(layer: &mut Layer) -> usize {
    layer.params_and_grads().iter().map(|(p, _)| p.len()).sum()
}

fn nudge(layer: &mut Layer, mut k: usize, delta: f64) {
    for (p, _) in layer.params_and_grads() {
        if k < p.len() {
            p[k] += delta;
            return;
        }
        k -= p.len();
    }
    panic!("parameter index out of range");
}

fn analytic(layer: &mut Layer) -> Vec<f64> {
    layer.params_and_grads().iter().flat_map(|(_, g)| g.iter().copied()).collect()
}

/// Worst relative error over every parameter and every input of `layer`,
/// comparing backward against central differences of the probe loss.
/// Each evaluation runs on a clone, so dropout masks are replayed exactly.
pub fn check_layer(layer: &Layer, x: &Matrix, proj: &Matrix, floor: f64) -> f64 {
    let mut base = layer.clone();
    base.forward(x, Mode::Train).unwrap();
    let gin = base.backward(proj, true).unwrap().expect("input gradient");
    let grads = analytic(&mut base);
    let mut worst: f64 = 0.0;
    let n = flat_len(&mut layer.clone());
    for k in 0..n {
        let mut plus = layer.clone();
        nudge(&mut plus, k, H);
        let mut minus = layer.clone();
        nudge(&mut minus, k, -H);
        let num = (probe(&mut plus, x, proj) - probe(&mut minus, x, proj)) / (2.0 * H);
        worst = worst.max(rel_err(grads[k], num, floor));
    }
    for k in 0..x.as_slice().len() {
        let mut xp = x.clone();
        xp.as_mut_slice()[k] += H;
        let mut xm = x.clone();
        xm.as_mut_slice()[k] -= H;
        let num = (probe(&mut layer.clone(), &xp, proj) - probe(&mut layer.clone(), &xm, proj)) / (2.0 * H);
        worst = worst.max(rel_err(gin.as_slice()[k], num, floor));
    }
    worst
}

fn network_loss(net: &mut Network, x: &Matrix, y: &Matrix) -> f64 {
    let logits = net.forward_logits(x, Mode::Train).unwrap();
    bce_with_logits(&logits, y).unwrap().0
}

/// Worst relative error over every parameter of `net` for the
/// binary cross-entropy training loss.
pub fn check_network(net: &Network, x: &Matrix, y: &Matrix, floor: f64) -> f64 {
    let mut base = net.clone();
    base.train_step(x, y).unwrap();
    let grads: Vec<f64> = base
        .layers_mut()
        .iter_mut()
        .flat_map(|l| l.params_and_grads().into_iter().flat_map(|(_, g)| g.to_vec()).collect::<Vec<_>>())
        .collect();
    let mut worst: f64 = 0.0;
    let mut k = 0;
    for li in 0..net.layers().len() {
        let count = flat_len(&mut net.clone().layers_mut()[li]);
        for j in 0..count {
            let mut plus = net.clone();
            nudge(&mut plus.layers_mut()[li], j, H);
            let mut minus = net.clone();
            nudge(&mut minus.layers_mut()[li], j, -H);
            let num = (network_loss(&mut plus, x, y) - network_loss(&mut minus, x, y)) / (2.0 * H);
            if std::env::var("GC_DEBUG").is_ok() && rel_err(grads[k], num, floor) > 1e-3 {
                eprintln!("layer {li} param {j}: analytic {:e} numeric {:e}", grads[k], num);
            }
            worst = worst.max(rel_err(grads[k], num, floor));
            k += 1;
        }
    }
    assert_eq!(k, grads.len());
    worst
}
