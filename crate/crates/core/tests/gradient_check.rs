//! Central finite differences against every backward pass.

mod common;

use common::suites::{layer_gradient_suite, network_gradient_suite};

const LAYER_TOL: f64 = 1e-4;
const NETWORK_TOL: f64 = 1e-3;

#[test]
fn every_layer_type() {
    for (name, worst) in layer_gradient_suite() {
        println!("{name}: worst relative error {worst:.3e}");
        assert!(worst < LAYER_TOL, "{name}: relative error {worst:.3e}");
    }
}

#[test]
fn end_to_end_networks() {
    for (name, worst) in network_gradient_suite() {
        println!("{name}: worst relative error {worst:.3e}");
        assert!(worst < NETWORK_TOL, "{name}: relative error {worst:.3e}");
    }
}
