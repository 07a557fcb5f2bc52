//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time {0} outside [0, 1]")]
    TimeOutOfRange(f64),

    #[error("non-finite value in {context} at step {step}")]
    NonFinite { context: &'static str, step: usize },

    #[error("training diverged at iteration {iteration} (loss {loss:.3e})")]
    Diverged { iteration: usize, loss: f64 },

    #[error("{dropped} of {total} simulated pairs were non-finite (budget {budget:.1}%)")]
    TooManyDrops {
        dropped: usize,
        total: usize,
        budget: f64,
    },

    #[error("{skipped} of {total} metric terms were degenerate (budget {budget:.1}%)")]
    TooManySkips {
        skipped: usize,
        total: usize,
        budget: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("corrupt payload: {0}")]
    Corrupt(String),

    #[error("unsupported format version {found} (reader supports up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
