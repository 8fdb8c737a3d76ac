//! Seed derivation. Every random decision in the crate draws from a ChaCha8
//! stream addressed by `(seed, purpose, index)`, so any single draw can be
//! replayed without replaying the ones before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as Rng;

/// Stream families. The discriminant is mixed into the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Synthetic dataset rows; index = row number.
    Synthesis = 1,
    /// Train/test shuffle.
    Split = 2,
    /// Layer initialisation; index = layer position.
    Init = 3,
    /// Per-epoch minibatch order; index = epoch.
    EpochShuffle = 4,
    /// Prune-and-regrow; index = epoch * 1024 + layer position.
    Evolution = 5,
    /// Dropout masks; index = forward call number.
    Dropout = 6,
    /// Appliance simulator; index = appliance id.
    Simulation = 7,
    /// Retries of a degenerate sparse draw.
    InitRetry = 8,
}

/// splitmix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed; used when a component needs its own base seed.
pub fn derive_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(purpose as u64)) ^ index)
}

/// Opens the stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(purpose as u64)));
    rng.set_stream(index);
    rng
}
