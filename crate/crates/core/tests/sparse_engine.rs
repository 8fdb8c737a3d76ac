mod common;

use std::collections::BTreeSet;

use common::*;
use nilm_core::activation::Activation;
use nilm_core::sparse::{edge_probability, EvolutionPolicy, SparseLayer};
use nilm_core::Mode;
use proptest::prelude::*;

#[test]
fn fully_connected_sparse_matches_dense_oracle() {
    let worst = common::suites::dense_equivalence_worst(100);
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn erdos_renyi_connection_count_is_binomial() {
    let p = edge_probability(100, 100, 11.0);
    assert!((p - 0.22).abs() < 1e-15);
    let mean = 10_000.0 * p;
    let sd = (10_000.0 * p * (1.0 - p)).sqrt();
    for seed in 0..10 {
        let l = SparseLayer::erdos_renyi(100, 100, 11.0, Activation::Relu, 0.1, seed).unwrap();
        let c = l.connection_count() as f64;
        assert!((c - mean).abs() <= 4.0 * sd, "seed {seed}: {c} connections, expected {mean} +- {}", 4.0 * sd);
    }
}

#[test]
fn init_train_evolve_is_bit_reproducible() {
    let run = || {
        let mut l = SparseLayer::erdos_renyi(20, 10, 3.0, Activation::Relu, 0.1, 42).unwrap();
        let mut r = rng(1);
        let x = random_matrix(&mut r, 8, 20, 1.0);
        let g = random_matrix(&mut r, 8, 10, 1.0);
        for epoch in 0..5 {
            l.forward(&x, Mode::Train).unwrap();
            l.backward(&g).unwrap();
            let grads = l.gradients().clone();
            l.sgd_step(&grads, 0.05).unwrap();
            l.evolve(&EvolutionPolicy::default(), epoch).unwrap();
        }
        l
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn evolve_conserves_count_and_regrows_only_into_vacancies(
        n_in in 2usize..30,
        n_out in 2usize..30,
        epsilon in 0.3f64..3.0,
        zeta in 0.01f64..0.99,
        seed in any::<u64>(),
    ) {
        let mut layer = SparseLayer::erdos_renyi(n_in, n_out, epsilon, Activation::Relu, 0.1, seed).unwrap();
        prop_assume!(layer.connection_count() >= 2);
        let before: BTreeSet<(usize, usize)> = layer.connections().map(|(i, j, _)| (i, j)).collect();
        let count = layer.connection_count();
        match layer.evolve(&EvolutionPolicy { zeta, regrow_init_scale: 0.1 }, seed ^ 1) {
            Ok(outcome) => {
                prop_assert_eq!(layer.connection_count(), count);
                let after: Vec<(usize, usize)> = layer.connections().map(|(i, j, _)| (i, j)).collect();
                let unique: BTreeSet<(usize, usize)> = after.iter().copied().collect();
                prop_assert_eq!(unique.len(), after.len());
                let fresh = unique.difference(&before).count();
                prop_assert_eq!(fresh, outcome.regrown);
                prop_assert!(layer.weights().iter().all(|w| w.is_finite()));
            }
            Err(nilm_core::Error::NoVacantPositions { needed, available }) => {
                prop_assert!(available < needed);
                prop_assert_eq!(available, n_in * n_out - count);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn evolve_removes_the_weights_nearest_zero(
        weights in proptest::collection::vec(-5.0f64..5.0, 4..40),
        zeta in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let n = weights.len();
        // a 1 x (4n) layer whose first n positions are occupied
        let conns: Vec<(u32, u32, f64)> = weights.iter().enumerate().map(|(j, &w)| (0, j as u32, w)).collect();
        let mut layer = SparseLayer::from_connections(1, 4 * n, 1.0, Activation::Relu, conns, vec![0.0; 4 * n]).unwrap();
        layer.evolve(&EvolutionPolicy { zeta, regrow_init_scale: 0.1 }, seed).unwrap();
        let survivors: Vec<f64> = layer.connections().filter(|&(_, j, _)| j < n).map(|(_, _, w)| w).collect();
        let removed: Vec<f64> = {
            let mut s = survivors.clone();
            let mut all = weights.clone();
            let mut gone = Vec::new();
            all.sort_by(f64::total_cmp);
            s.sort_by(f64::total_cmp);
            let mut k = 0;
            for w in all {
                if k < s.len() && s[k] == w { k += 1 } else { gone.push(w) }
            }
            gone
        };
        let pos: Vec<f64> = weights.iter().copied().filter(|&w| w >= 0.0).collect();
        let neg: Vec<f64> = weights.iter().copied().filter(|&w| w < 0.0).collect();
        let rm_pos = (zeta * pos.len() as f64).floor() as usize;
        let rm_neg = (zeta * neg.len() as f64).floor() as usize;
        prop_assert_eq!(removed.len(), rm_pos + rm_neg);
        let kept_pos_min = survivors.iter().copied().filter(|&w| w >= 0.0).fold(f64::INFINITY, f64::min);
        let kept_neg_max = survivors.iter().copied().filter(|&w| w < 0.0).fold(f64::NEG_INFINITY, f64::max);
        for w in removed {
            if w >= 0.0 { prop_assert!(w <= kept_pos_min) } else { prop_assert!(w >= kept_neg_max) }
        }
    }
}
