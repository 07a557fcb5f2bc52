//! Discrete samplers, inversion, and round-trip reconstruction.
//!
//! Rectified flow integrates `dx/dt = v(x, t)` with plain Euler. The
//! constant-acceleration sampler evaluates the initial velocity once at
//! `(x0, t = 0)` and then steps
//!
//! ```text
//! x_{t+dt} = x_t + dt * v0 + t' * dt * a(x_t, t, v0),   t' = (2i + 1) / (2N)
//! ```
//!
//! The midpoint factor `t'` makes the rule exact for genuinely constant
//! acceleration: summing `t' * dt` over a step range telescopes to the exact
//! `t^2 / 2` increments, so with oracle fields every grid point lands on the
//! interpolant for any `N`, and `N = 1` is the closed form
//! `x0 + v + a / 2`.
//!
//! Inversion runs the same update in reverse from `x1`, estimating the
//! velocity once at `(x1, t = 1)`; reconstruction reuses that velocity for
//! the forward pass instead of re-estimating it at `x0_hat`.
//!
//! Cost accounting: an `N`-step constant-acceleration sample spends exactly
//! `N` acceleration evaluations plus the single velocity evaluation
//! (`N + 1` total), versus `N` for rectified flow. [`Counted`] wraps a field
//! to audit this.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::flow::{grid_time, midpoint_time};
use crate::nn::MlpModel;
use crate::vecmath;

/// A velocity field `v(x, t)`.
pub trait VelocityField {
    fn velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>>;
}

/// An acceleration field `a(x, t, v0)`; `v0` is the conditioning velocity
/// and may be ignored by unconditioned fields.
pub trait AccelerationField {
    fn acceleration(&self, x: &[f64], t: f64, v0: &[f64]) -> Result<Vec<f64>>;
}

impl<F: Fn(&[f64], f64) -> Vec<f64>> VelocityField for F {
    fn velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self(x, t))
    }
}

impl<F: Fn(&[f64], f64, &[f64]) -> Vec<f64>> AccelerationField for F {
    fn acceleration(&self, x: &[f64], t: f64, v0: &[f64]) -> Result<Vec<f64>> {
        Ok(self(x, t, v0))
    }
}

/// Network input layout for velocity nets: `[x..., t]`.
pub fn velocity_input(x: &[f64], t: f64) -> Vec<f64> {
    let mut input = Vec::with_capacity(x.len() + 1);
    input.extend_from_slice(x);
    input.push(t);
    input
}

/// Network input layout for acceleration nets: `[x..., t]`, with the
/// conditioning velocity appended when present.
pub fn acceleration_input(x: &[f64], t: f64, cond: Option<&[f64]>) -> Vec<f64> {
    let mut input = Vec::with_capacity(x.len() + 1 + cond.map_or(0, <[f64]>::len));
    input.extend_from_slice(x);
    input.push(t);
    if let Some(v) = cond {
        input.extend_from_slice(v);
    }
    input
}

/// MLP velocity adapter: the network consumes `[x..., t]`.
pub struct MlpVelocity<'a> {
    pub model: &'a MlpModel,
}

impl VelocityField for MlpVelocity<'_> {
    fn velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.model.forward(&velocity_input(x, t))
    }
}

/// MLP acceleration adapter: the network consumes `[x..., t]` or, with
/// initial-velocity conditioning, `[x..., t, v0...]`.
pub struct MlpAcceleration<'a> {
    pub model: &'a MlpModel,
    pub ivc: bool,
}

impl AccelerationField for MlpAcceleration<'_> {
    fn acceleration(&self, x: &[f64], t: f64, v0: &[f64]) -> Result<Vec<f64>> {
        self.model
            .forward(&acceleration_input(x, t, self.ivc.then_some(v0)))
    }
}

/// Ground-truth fields of one constant-acceleration pair.
#[derive(Debug, Clone)]
pub struct ExactPairField {
    velocity: Vec<f64>,
    acceleration: Vec<f64>,
}

impl ExactPairField {
    pub fn new(x0: &[f64], x1: &[f64], h: f64) -> Result<Self> {
        let velocity = crate::flow::velocity_target(x0, x1, h)?;
        let acceleration = crate::flow::acceleration_target(x0, x1, &velocity)?;
        Ok(Self {
            velocity,
            acceleration,
        })
    }
}

impl VelocityField for ExactPairField {
    fn velocity(&self, _x: &[f64], _t: f64) -> Result<Vec<f64>> {
        Ok(self.velocity.clone())
    }
}

impl AccelerationField for ExactPairField {
    fn acceleration(&self, _x: &[f64], _t: f64, _v0: &[f64]) -> Result<Vec<f64>> {
        Ok(self.acceleration.clone())
    }
}

/// Field wrapper that counts evaluations.
pub struct Counted<T> {
    inner: T,
    count: Cell<u64>,
}

impl<T> Counted<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            count: Cell::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.get()
    }
}

impl<T: VelocityField> VelocityField for Counted<T> {
    fn velocity(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.count.set(self.count.get() + 1);
        self.inner.velocity(x, t)
    }
}

impl<T: AccelerationField> AccelerationField for Counted<T> {
    fn acceleration(&self, x: &[f64], t: f64, v0: &[f64]) -> Result<Vec<f64>> {
        self.count.set(self.count.get() + 1);
        self.inner.acceleration(x, t, v0)
    }
}

/// Integration direction of a logged path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone)]
pub struct TrajectoryMeta {
    /// Free-form model label, filled in by callers that care.
    pub model: String,
    pub n_steps: usize,
    pub h: Option<f64>,
    pub direction: Direction,
}

/// Ordered `(t, x_t)` samples of one simulated path, endpoints included.
#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl TrajectoryLog {
    fn with_capacity(n_steps: usize, direction: Direction) -> Self {
        Self {
            times: Vec::with_capacity(n_steps + 1),
            points: Vec::with_capacity(n_steps + 1),
            meta: TrajectoryMeta {
                model: String::new(),
                n_steps,
                h: None,
                direction,
            },
        }
    }

    fn push(&mut self, t: f64, x: &[f64]) {
        self.times.push(t);
        self.points.push(x.to_vec());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> &[f64] {
        &self.points[0]
    }

    pub fn end(&self) -> &[f64] {
        self.points.last().expect("log is never empty")
    }

    /// Checks the structural invariants: matching lengths and times strictly
    /// monotone in the logged direction.
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.points.len() {
            return Err(Error::ShapeMismatch {
                context: "trajectory log",
                expected: self.times.len(),
                got: self.points.len(),
            });
        }
        let ordered = match self.meta.direction {
            Direction::Forward => self.times.windows(2).all(|w| w[0] < w[1]),
            Direction::Inverse => self.times.windows(2).all(|w| w[0] > w[1]),
        };
        if !ordered {
            return Err(Error::Degenerate("trajectory times are not strictly monotone".into()));
        }
        Ok(())
    }

    /// CSV export with columns `t, x_0..x_{d-1}`.
    pub fn to_csv(&self) -> String {
        let dim = self.points.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for i in 0..dim {
            out.push_str(&format!(",x_{i}"));
        }
        out.push('\n');
        for (t, p) in self.times.iter().zip(&self.points) {
            out.push_str(&format!("{t}"));
            for v in p {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn check_steps(n_steps: usize) -> Result<()> {
    if n_steps == 0 {
        return Err(Error::InvalidConfig("sampler needs at least 1 step".into()));
    }
    Ok(())
}

fn check_finite(x: &[f64], context: &'static str, step: usize) -> Result<()> {
    if !vecmath::is_finite(x) {
        return Err(Error::NonFinite { context, step });
    }
    Ok(())
}

/// Euler integration of a velocity field from `x0` over `t in [0, 1]`.
pub fn sample_rf<V: VelocityField + ?Sized>(
    x0: &[f64],
    field: &V,
    n_steps: usize,
) -> Result<(Vec<f64>, TrajectoryLog)> {
    check_steps(n_steps)?;
    let dt = 1.0 / n_steps as f64;
    let mut x = x0.to_vec();
    let mut log = TrajectoryLog::with_capacity(n_steps, Direction::Forward);
    log.push(0.0, &x);
    for i in 0..n_steps {
        let t = grid_time(i, n_steps);
        let v = field.velocity(&x, t)?;
        for (xj, vj) in x.iter_mut().zip(&v) {
            *xj += dt * vj;
        }
        check_finite(&x, "sample_rf state", i)?;
        log.push(grid_time(i + 1, n_steps), &x);
    }
    Ok((x, log))
}

/// Constant-acceleration sampling: one velocity evaluation at `(x0, 0)`,
/// then `n_steps` midpoint-weighted acceleration steps.
pub fn sample_caf<V: VelocityField + ?Sized, A: AccelerationField + ?Sized>(
    x0: &[f64],
    v_field: &V,
    a_field: &A,
    n_steps: usize,
) -> Result<(Vec<f64>, TrajectoryLog)> {
    check_steps(n_steps)?;
    let v0 = v_field.velocity(x0, 0.0)?;
    let (x, log) = caf_forward_with_velocity(x0, &v0, a_field, n_steps)?;
    Ok((x, log))
}

fn caf_forward_with_velocity<A: AccelerationField + ?Sized>(
    x0: &[f64],
    v0: &[f64],
    a_field: &A,
    n_steps: usize,
) -> Result<(Vec<f64>, TrajectoryLog)> {
    let dt = 1.0 / n_steps as f64;
    let mut x = x0.to_vec();
    let mut log = TrajectoryLog::with_capacity(n_steps, Direction::Forward);
    log.push(0.0, &x);
    for i in 0..n_steps {
        let t = grid_time(i, n_steps);
        let tp = midpoint_time(i, n_steps);
        let a = a_field.acceleration(&x, t, v0)?;
        for ((xj, vj), aj) in x.iter_mut().zip(v0).zip(&a) {
            *xj = *xj + dt * vj + tp * dt * aj;
        }
        check_finite(&x, "sample_caf state", i)?;
        log.push(grid_time(i + 1, n_steps), &x);
    }
    Ok((x, log))
}

/// Reverse Euler integration of a velocity field from `x1` down to `t = 0`.
pub fn invert_rf<V: VelocityField + ?Sized>(
    x1: &[f64],
    field: &V,
    n_steps: usize,
) -> Result<(Vec<f64>, TrajectoryLog)> {
    check_steps(n_steps)?;
    let dt = 1.0 / n_steps as f64;
    let mut x = x1.to_vec();
    let mut log = TrajectoryLog::with_capacity(n_steps, Direction::Inverse);
    log.push(1.0, &x);
    for i in (0..n_steps).rev() {
        let t_next = grid_time(i + 1, n_steps);
        let v = field.velocity(&x, t_next)?;
        for (xj, vj) in x.iter_mut().zip(&v) {
            *xj -= dt * vj;
        }
        check_finite(&x, "invert_rf state", i)?;
        log.push(grid_time(i, n_steps), &x);
    }
    Ok((x, log))
}

/// Result of a constant-acceleration inversion.
#[derive(Debug, Clone)]
pub struct CafInversion {
    pub x0_hat: Vec<f64>,
    /// Velocity estimated once at `(x1, t = 1)`; reuse it for regeneration.
    pub v_used: Vec<f64>,
    pub log: TrajectoryLog,
}

/// Runs the forward update in reverse from `x1`, using the same step
/// midpoints descending so exact constant fields invert algebraically.
pub fn invert_caf<V: VelocityField + ?Sized, A: AccelerationField + ?Sized>(
    x1: &[f64],
    v_field: &V,
    a_field: &A,
    n_steps: usize,
) -> Result<CafInversion> {
    check_steps(n_steps)?;
    let v_used = v_field.velocity(x1, 1.0)?;
    let dt = 1.0 / n_steps as f64;
    let mut x = x1.to_vec();
    let mut log = TrajectoryLog::with_capacity(n_steps, Direction::Inverse);
    log.push(1.0, &x);
    for i in (0..n_steps).rev() {
        let t_next = grid_time(i + 1, n_steps);
        let tp = midpoint_time(i, n_steps);
        let a = a_field.acceleration(&x, t_next, &v_used)?;
        for ((xj, vj), aj) in x.iter_mut().zip(&v_used).zip(&a) {
            *xj = *xj - dt * vj - tp * dt * aj;
        }
        check_finite(&x, "invert_caf state", i)?;
        log.push(grid_time(i, n_steps), &x);
    }
    Ok(CafInversion { x0_hat: x, v_used, log })
}

/// Invert-then-regenerate result.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub x0_hat: Vec<f64>,
    pub x1_hat: Vec<f64>,
    pub round_trip_error: f64,
}

/// Inverts `x1`, then regenerates with the *same* velocity estimate rather
/// than re-estimating at `x0_hat`. At `N = 1` this cancels exactly for any
/// frozen field pair.
pub fn reconstruct_caf<V: VelocityField + ?Sized, A: AccelerationField + ?Sized>(
    x1: &[f64],
    v_field: &V,
    a_field: &A,
    n_steps: usize,
) -> Result<Reconstruction> {
    let inv = invert_caf(x1, v_field, a_field, n_steps)?;
    let (x1_hat, _) = caf_forward_with_velocity(&inv.x0_hat, &inv.v_used, a_field, n_steps)?;
    Ok(Reconstruction {
        round_trip_error: vecmath::dist(&x1_hat, x1),
        x0_hat: inv.x0_hat,
        x1_hat,
    })
}

/// Euler round trip for the rectified-flow baseline.
pub fn reconstruct_rf<V: VelocityField + ?Sized>(
    x1: &[f64],
    field: &V,
    n_steps: usize,
) -> Result<Reconstruction> {
    let (x0_hat, _) = invert_rf(x1, field, n_steps)?;
    let (x1_hat, _) = sample_rf(&x0_hat, field, n_steps)?;
    Ok(Reconstruction {
        round_trip_error: vecmath::dist(&x1_hat, x1),
        x0_hat,
        x1_hat,
    })
}
