//! Objectives and training loops.
//!
//! Velocity nets regress their target over interpolated inputs: rectified
//! flow fits `x1 - x0` at `x_t = (1 - t) x0 + t x1`, the constant
//! acceleration variant fits the time-independent initial velocity
//! `h (x1 - x0)` at the quadratic interpolant. The acceleration net then
//! fits `2 (x1 - x0) - 2 v` with the velocity conditioning treated as a
//! constant input: gradients flow to the acceleration parameters only, which
//! [`TrainTarget::CafAcceleration`] encodes by borrowing the velocity model
//! immutably.
//!
//! Training is two-phase: the velocity net is trained to convergence first,
//! then the acceleration net against the frozen velocity. With
//! `teacher_forcing` the conditioning vector is the ground-truth target
//! `h (x1 - x0)`; without it, the frozen velocity net's own estimate at
//! `(x_t, t)`, matching what the sampler will see.
//!
//! Batch gradients accumulate in index order, so a fixed seed reproduces
//! losses and parameters bit-for-bit.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Coupling, CouplingMode, DistributionSpec};
use crate::error::{Error, Result};
use crate::flow::{acceleration_target, interp_caf, interp_rf, velocity_target, FlowConfig, TimeDist};
use crate::nn::{adam_step, AdamParams, AdamState, Gradients, MlpModel};
use crate::rng::DetRng;
use crate::sample::{velocity_input, sample_rf, MlpVelocity};

/// Abort threshold for a diverging loss.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Budget of non-finite trajectories a reflow run may drop.
pub const REFLOW_DROP_BUDGET: f64 = 0.01;

/// A borrowed `(x0, x1)` pair.
pub type PairRef<'a> = (&'a [f64], &'a [f64]);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamParams,
    pub seed: u64,
    pub flow: FlowConfig,
    /// Condition the acceleration net on the initial velocity.
    #[serde(default = "default_true")]
    pub ivc: bool,
    /// Condition on the ground-truth velocity target during training rather
    /// than the learned estimate.
    #[serde(default = "default_true")]
    pub teacher_forcing: bool,
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_size: 64,
            adam: AdamParams::default(),
            seed: 0,
            flow: FlowConfig::default(),
            ivc: true,
            teacher_forcing: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, coupling: &Coupling) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > coupling.len() {
            return Err(Error::InvalidConfig(format!(
                "batch_size {} must be in 1..={}",
                self.batch_size,
                coupling.len()
            )));
        }
        if !self.ivc && !self.teacher_forcing {
            return Err(Error::InvalidConfig(
                "teacher_forcing has no meaning without ivc; leave it at the default".into(),
            ));
        }
        self.flow.validate()
    }
}

/// Per-run training record.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// One loss per iteration.
    pub loss_curve: Vec<f64>,
    /// Cumulative seconds at each iteration.
    pub wallclock_curve: Vec<f64>,
    pub final_loss: f64,
    pub wallclock_secs: f64,
    pub config: TrainConfig,
}

impl TrainReport {
    /// CSV loss log with columns `iteration, loss, wallclock`.
    pub fn loss_log_csv(&self) -> String {
        let mut out = String::from("iteration,loss,wallclock\n");
        for (i, (loss, wall)) in self.loss_curve.iter().zip(&self.wallclock_curve).enumerate() {
            out.push_str(&format!("{i},{loss},{wall}\n"));
        }
        out
    }
}

/// What a training run optimizes. The acceleration variant borrows its
/// velocity net immutably: no step can touch the velocity parameters.
pub enum TrainTarget<'a> {
    RfVelocity(&'a mut MlpModel),
    CafVelocity(&'a mut MlpModel),
    CafAcceleration {
        acceleration: &'a mut MlpModel,
        velocity: &'a MlpModel,
    },
}

/// Mean-square rectified-flow objective over a batch:
/// `mean ||(x1 - x0) - v_theta(x_t, t)||^2` with `x_t` linear.
pub fn rf_velocity_loss(
    pairs: &[PairRef<'_>],
    model: &MlpModel,
    t_batch: &[f64],
) -> Result<(f64, Gradients)> {
    velocity_loss(pairs, model, t_batch, None)
}

/// Initial-velocity objective: `mean ||h (x1 - x0) - v_theta(x_t, t)||^2`
/// with `x_t` on the constant-acceleration interpolant. The target does not
/// depend on `t`; only the input does.
pub fn caf_velocity_loss(
    pairs: &[PairRef<'_>],
    model: &MlpModel,
    t_batch: &[f64],
    h: f64,
) -> Result<(f64, Gradients)> {
    velocity_loss(pairs, model, t_batch, Some(h))
}

fn velocity_loss(
    pairs: &[PairRef<'_>],
    model: &MlpModel,
    t_batch: &[f64],
    caf_h: Option<f64>,
) -> Result<(f64, Gradients)> {
    check_batch(pairs, t_batch)?;
    let batch = pairs.len();
    let dim = pairs[0].0.len();
    let mut inputs = Vec::with_capacity(batch * (dim + 1));
    let mut targets = Vec::with_capacity(batch * dim);
    for (&(x0, x1), &t) in pairs.iter().zip(t_batch) {
        let (x_t, target) = match caf_h {
            None => (interp_rf(x0, x1, t)?, velocity_target(x0, x1, 1.0)?),
            Some(h) => {
                let v = velocity_target(x0, x1, h)?;
                (interp_caf(x0, x1, t, &v)?, v)
            }
        };
        inputs.extend_from_slice(&x_t);
        inputs.push(t);
        targets.extend_from_slice(&target);
    }
    batched_square_loss(model, &inputs, &targets, batch)
}

/// Shared mean-square regression step: forward the batch, form
/// `2 (out - target) / B` output gradients, backprop once.
fn batched_square_loss(
    model: &MlpModel,
    inputs: &[f64],
    targets: &[f64],
    batch: usize,
) -> Result<(f64, Gradients)> {
    let scale = 1.0 / batch as f64;
    let trace = model.forward_batch_trace(inputs, batch)?;
    let outputs = trace.outputs();
    if outputs.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            context: "loss targets",
            expected: outputs.len(),
            got: targets.len(),
        });
    }
    let mut loss = 0.0;
    let mut output_grads = Vec::with_capacity(outputs.len());
    for (o, tg) in outputs.iter().zip(targets) {
        let r = o - tg;
        loss += r * r;
        output_grads.push(2.0 * scale * r);
    }
    let mut grads = Gradients::zeros_like(model);
    model.backward_batch(&trace, &output_grads, &mut grads)?;
    finish_loss(loss * scale, grads)
}

/// Acceleration objective with the velocity stop-gradient:
/// `mean ||a(x_t) - a_phi(x_t, t [, v_cond])||^2`, gradients with respect to
/// the acceleration parameters only. The regression target always uses the
/// ground-truth velocity; `teacher_forcing` only selects the conditioning
/// input.
pub fn caf_acceleration_loss(
    pairs: &[PairRef<'_>],
    v_model: &MlpModel,
    a_model: &MlpModel,
    t_batch: &[f64],
    h: f64,
    ivc: bool,
    teacher_forcing: bool,
) -> Result<(f64, Gradients)> {
    check_batch(pairs, t_batch)?;
    let batch = pairs.len();
    let dim = pairs[0].0.len();
    let cond_dim = if ivc { dim } else { 0 };
    let mut inputs = Vec::with_capacity(batch * (dim + 1 + cond_dim));
    let mut targets = Vec::with_capacity(batch * dim);
    for (&(x0, x1), &t) in pairs.iter().zip(t_batch) {
        let v = velocity_target(x0, x1, h)?;
        let x_t = interp_caf(x0, x1, t, &v)?;
        targets.extend_from_slice(&acceleration_target(x0, x1, &v)?);
        inputs.extend_from_slice(&x_t);
        inputs.push(t);
        if ivc {
            // The conditioning is a constant input for gradient purposes:
            // nothing here flows back into the velocity parameters.
            let cond = if teacher_forcing {
                v
            } else {
                v_model.forward(&velocity_input(&x_t, t))?
            };
            inputs.extend_from_slice(&cond);
        }
    }
    batched_square_loss(a_model, &inputs, &targets, batch)
}

fn check_batch(pairs: &[PairRef<'_>], t_batch: &[f64]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    if pairs.len() != t_batch.len() {
        return Err(Error::ShapeMismatch {
            context: "loss t_batch",
            expected: pairs.len(),
            got: t_batch.len(),
        });
    }
    if let Some(&t) = t_batch.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::TimeOutOfRange(t));
    }
    Ok(())
}

fn finish_loss(loss: f64, grads: Gradients) -> Result<(f64, Gradients)> {
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "loss",
            step: 0,
        });
    }
    Ok((loss, grads))
}

enum ObjectiveKind {
    Rf,
    CafVelocity,
    CafAcceleration,
}

/// Runs minibatch Adam on one objective. Deterministic given the config
/// seed; aborts on divergence or non-finite values.
pub fn train(target: TrainTarget<'_>, coupling: &Coupling, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate(coupling)?;
    let (kind, model, frozen_velocity): (ObjectiveKind, &mut MlpModel, Option<&MlpModel>) =
        match target {
            TrainTarget::RfVelocity(m) => (ObjectiveKind::Rf, m, None),
            TrainTarget::CafVelocity(m) => (ObjectiveKind::CafVelocity, m, None),
            TrainTarget::CafAcceleration {
                acceleration,
                velocity,
            } => (ObjectiveKind::CafAcceleration, acceleration, Some(velocity)),
        };
    let stream_tag = match kind {
        ObjectiveKind::Rf => 0x7266,
        ObjectiveKind::CafVelocity => 0x6361665f76,
        ObjectiveKind::CafAcceleration => 0x6361665f61,
    };

    let mut rng = DetRng::derive(cfg.seed, stream_tag);
    let mut state = AdamState::new(model, cfg.adam);
    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    let mut wallclock_curve = Vec::with_capacity(cfg.iterations);
    let pairs = coupling.pairs();
    let started = Instant::now();

    let mut batch: Vec<PairRef<'_>> = Vec::with_capacity(cfg.batch_size);
    let mut t_batch = vec![0.0; cfg.batch_size];
    for iteration in 0..cfg.iterations {
        batch.clear();
        for _ in 0..cfg.batch_size {
            let (x0, x1) = &pairs[rng.index(pairs.len())];
            batch.push((x0.as_slice(), x1.as_slice()));
        }
        for t in t_batch.iter_mut() {
            *t = match cfg.flow.time_dist {
                TimeDist::Uniform => rng.next_f64(),
            };
        }

        let (loss, grads) = match kind {
            ObjectiveKind::Rf => rf_velocity_loss(&batch, model, &t_batch)?,
            ObjectiveKind::CafVelocity => caf_velocity_loss(&batch, model, &t_batch, cfg.flow.h)?,
            ObjectiveKind::CafAcceleration => caf_acceleration_loss(
                &batch,
                frozen_velocity.expect("acceleration target carries its velocity net"),
                model,
                &t_batch,
                cfg.flow.h,
                cfg.ivc,
                cfg.teacher_forcing,
            )?,
        };
        if loss > DIVERGENCE_THRESHOLD {
            return Err(Error::Diverged { iteration, loss });
        }
        adam_step(model, &mut state, &grads)?;
        loss_curve.push(loss);
        wallclock_curve.push(started.elapsed().as_secs_f64());
    }

    Ok(TrainReport {
        final_loss: *loss_curve.last().unwrap(),
        loss_curve,
        wallclock_curve,
        wallclock_secs: started.elapsed().as_secs_f64(),
        config: *cfg,
    })
}

/// Builds a deterministic coupling by pushing source draws through a trained
/// rectified-flow model with `sim_steps` Euler steps. Non-finite
/// trajectories are dropped and counted; more than 1% dropped aborts.
pub fn reflow(
    rf_model: &MlpModel,
    src: &DistributionSpec,
    n_pairs: usize,
    sim_steps: usize,
    seed: u64,
) -> Result<Coupling> {
    if n_pairs == 0 {
        return Err(Error::InvalidConfig("reflow needs at least one pair".into()));
    }
    if sim_steps == 0 {
        return Err(Error::InvalidConfig("reflow needs at least one step".into()));
    }
    let sources = crate::data::sample_distribution(src, n_pairs, seed)?;
    let field = MlpVelocity { model: rf_model };
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut dropped = 0usize;
    for x0 in sources {
        match sample_rf(&x0, &field, sim_steps) {
            Ok((x1, _)) => pairs.push((x0, x1)),
            Err(Error::NonFinite { .. }) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if dropped as f64 > REFLOW_DROP_BUDGET * n_pairs as f64 {
        return Err(Error::TooManyDrops {
            dropped,
            total: n_pairs,
            budget: REFLOW_DROP_BUDGET * 100.0,
        });
    }
    let fingerprint = crc32fast::hash(&crate::nn::save_checkpoint(rf_model));
    Coupling::new(
        pairs,
        CouplingMode::Deterministic,
        format!("reflow(model=crc32:{fingerprint:08x}, sim_steps={sim_steps}, seed={seed})"),
    )
}
