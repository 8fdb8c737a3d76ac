//! Sparse evolutionary training and synthetic-aggregate construction for
//! non-intrusive load monitoring.
//!
//! Everything here is pure computation over in-memory buffers and needs only
//! `alloc`. File formats, rendering and the command line live in the `nilm`
//! crate.
#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod activation;
pub mod appliance_sim;
pub mod error;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod series;
pub mod sparse;
pub mod synthesis;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;

/// Number of monitored appliances (dishwasher, washing machine, microwave, fridge).
pub const NUM_APPLIANCES: usize = 4;

/// Appliance names in channel order.
pub const APPLIANCE_NAMES: [&str; NUM_APPLIANCES] =
    ["dishwasher", "washing_machine", "microwave", "fridge"];

/// Forward-pass mode. Train mode caches activations for the backward pass,
/// uses batch statistics in batch norm and samples dropout masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
