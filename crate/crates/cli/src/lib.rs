//! Experiment harness for constant-acceleration flow runs: config-driven
//! pipelines, an ablation grid, and SVG trajectory plots. The binary is a
//! thin wrapper over this library so integration tests can drive everything
//! in-process.

pub mod ablate;
pub mod config;
pub mod pipeline;
pub mod plot;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("phase {phase} failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: caf_core::Error,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Plot(String),
}

impl CliError {
    /// Process exit code: 2 for config errors, 3 for phase failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }

    pub fn phase(phase: &'static str) -> impl FnOnce(caf_core::Error) -> CliError {
        move |source| CliError::Phase { phase, source }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}
