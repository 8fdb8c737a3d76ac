use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("backward called without a cached train-mode forward pass")]
    NoCachedForward,
    #[error("Erdos-Renyi draw produced no connections ({n_in}x{n_out}, epsilon {epsilon})")]
    DegenerateLayer { n_in: usize, n_out: usize, epsilon: f64 },
    #[error("cannot regrow {needed} connections: only {available} vacant positions")]
    NoVacantPositions { needed: usize, available: usize },
    #[error("appliance {appliance}: no valid windows")]
    NoValidWindows { appliance: usize },
    #[error("appliance {appliance}: window matrix is empty")]
    EmptyMatrix { appliance: usize },
    #[error("batch norm needs at least 2 samples in train mode, got {0}")]
    BatchTooSmall(usize),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid power series: {0}")]
    InvalidSeries(String),
    #[error("invalid sparse layer record: {0}")]
    InvalidLayer(String),
}
