//! Constant-acceleration flow matching on low-dimensional synthetic data.
//!
//! The crate trains a pair of small MLPs — an initial-velocity field
//! `v(x0) = h (x1 - x0)` and a constant acceleration field
//! `a = 2 (x1 - x0) - 2 v` — over couplings of a source and target
//! distribution, then samples with a midpoint-corrected Euler rule that is
//! exact for the constant-acceleration model class. A rectified-flow
//! baseline (constant velocity, plain Euler) and the reflow procedure for
//! building deterministic couplings are included for comparison, along with
//! straightness, coupling-preservation, and sliced-Wasserstein diagnostics.
//!
//! Modules:
//!
//! - [`nn`]: dense-network substrate (forward, manual backprop, Adam,
//!   checkpoints)
//! - [`data`]: synthetic 2D distributions and couplings
//! - [`flow`]: interpolants, target fields, closed form, exact-field oracle
//! - [`train`]: objectives, training loops, reflow
//! - [`sample`]: discrete samplers, inversion, reconstruction
//! - [`metrics`]: straightness, coupling preservation, sliced Wasserstein

pub mod data;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sample;
pub mod train;
pub mod vecmath;

pub use data::{
    crossing_fixture, make_stochastic_coupling, sample_distribution, Coupling, CouplingMode,
    DistributionSpec,
};
pub use error::{Error, Result};
pub use flow::{
    acceleration_target, closed_form_endpoint, exact_field_oracle, interp_caf, interp_rf,
    velocity_target, DistanceMetric, FlowConfig, TimeDist,
};
pub use metrics::MetricReport;
pub use nn::{
    adam_step, load_checkpoint, save_checkpoint, Activation, AdamParams, AdamState, Gradients,
    MlpModel,
};
pub use rng::DetRng;
pub use sample::{
    invert_caf, invert_rf, reconstruct_caf, reconstruct_rf, sample_caf, sample_rf,
    AccelerationField, TrajectoryLog, VelocityField,
};
pub use train::{reflow, train, TrainConfig, TrainReport, TrainTarget};
