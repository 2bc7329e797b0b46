use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("field too small: need n + k < p (n={shares}, k={pack}, p={modulus})")]
    FieldTooSmall { shares: usize, pack: usize, modulus: u64 },

    #[error("threshold not met: {have} shares supplied, {need} required")]
    ThresholdNotMet { have: usize, need: usize },

    #[error("tampering detected: shares are inconsistent with a single polynomial")]
    TamperDetected,

    #[error("protocol violation: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, Error>;
