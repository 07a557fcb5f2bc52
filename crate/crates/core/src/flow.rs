//! Flow interpolants and ground-truth target fields.
//!
//! Two path families between a pair `(x0, x1)`:
//!
//! - rectified (constant velocity): `x_t = (1 - t) x0 + t x1`
//! - constant acceleration: `x_t = (1 - t^2) x0 + t^2 x1 + v (t - t^2)`
//!   with initial velocity `v = h (x1 - x0)` and constant acceleration
//!   `a = 2 (x1 - x0) - 2 v`
//!
//! The quadratic interpolant is algebraically `x0 + v t + a t^2 / 2`, so the
//! path is a straight segment traversed at varying speed: `h = 1` is constant
//! velocity, `h < 1` accelerates, `h > 1` decelerates. Setting `t = 1` in the
//! kinematic form gives the one-step closed form `x1 = x0 + v + a / 2`.
//!
//! [`exact_field_oracle`] bundles the three formulas for a known pair; the
//! samplers and metrics test against it throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training-time distribution of interpolation times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDist {
    Uniform,
}

/// Distance used by the regression objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    L2Squared,
}

/// Flow hyperparameters shared by training and sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// Initial-velocity scale in `v = h (x1 - x0)`.
    pub h: f64,
    /// Sampler step count `N`; the grid is `t = i / N` exactly.
    pub n_steps: usize,
    #[serde(default = "default_time_dist")]
    pub time_dist: TimeDist,
    #[serde(default = "default_distance")]
    pub distance: DistanceMetric,
}

fn default_time_dist() -> TimeDist {
    TimeDist::Uniform
}

fn default_distance() -> DistanceMetric {
    DistanceMetric::L2Squared
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            h: 2.0,
            n_steps: 1,
            time_dist: TimeDist::Uniform,
            distance: DistanceMetric::L2Squared,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
        }
        if !self.h.is_finite() {
            return Err(Error::InvalidConfig(format!("h must be finite, got {}", self.h)));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }
}

/// Grid time `i / n`, computed from integers so endpoint identities are exact.
#[inline]
pub fn grid_time(i: usize, n: usize) -> f64 {
    i as f64 / n as f64
}

/// Step midpoint `t' = (2 i + 1) / (2 n)` used by the discrete sampler.
#[inline]
pub fn midpoint_time(i: usize, n: usize) -> f64 {
    (2 * i + 1) as f64 / (2 * n) as f64
}

fn check_pair(context: &'static str, x0: &[f64], x1: &[f64]) -> Result<()> {
    if x0.len() != x1.len() {
        return Err(Error::ShapeMismatch {
            context,
            expected: x0.len(),
            got: x1.len(),
        });
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    Ok(())
}

/// Linear interpolation `(1 - t) x0 + t x1`.
pub fn interp_rf(x0: &[f64], x1: &[f64], t: f64) -> Result<Vec<f64>> {
    check_pair("interp_rf", x0, x1)?;
    check_time(t)?;
    Ok(x0
        .iter()
        .zip(x1)
        .map(|(a, b)| (1.0 - t) * a + t * b)
        .collect())
}

/// Initial-velocity target `v = h (x1 - x0)`.
pub fn velocity_target(x0: &[f64], x1: &[f64], h: f64) -> Result<Vec<f64>> {
    check_pair("velocity_target", x0, x1)?;
    Ok(x0.iter().zip(x1).map(|(a, b)| h * (b - a)).collect())
}

/// Constant-acceleration target `a = 2 (x1 - x0) - 2 v`.
pub fn acceleration_target(x0: &[f64], x1: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_pair("acceleration_target", x0, x1)?;
    check_pair("acceleration_target velocity", x0, v)?;
    Ok(x0
        .iter()
        .zip(x1)
        .zip(v)
        .map(|((a, b), vi)| 2.0 * (b - a) - 2.0 * vi)
        .collect())
}

/// Quadratic interpolant `(1 - t^2) x0 + t^2 x1 + v (t - t^2)`.
pub fn interp_caf(x0: &[f64], x1: &[f64], t: f64, v: &[f64]) -> Result<Vec<f64>> {
    check_pair("interp_caf", x0, x1)?;
    check_pair("interp_caf velocity", x0, v)?;
    check_time(t)?;
    let t2 = t * t;
    Ok(x0
        .iter()
        .zip(x1)
        .zip(v)
        .map(|((a, b), vi)| (1.0 - t2) * a + t2 * b + vi * (t - t2))
        .collect())
}

/// One-step closed form `x1 = x0 + v + a / 2`.
pub fn closed_form_endpoint(x0: &[f64], v: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    check_pair("closed_form_endpoint velocity", x0, v)?;
    check_pair("closed_form_endpoint acceleration", x0, a)?;
    Ok(x0
        .iter()
        .zip(v)
        .zip(a)
        .map(|((x, vi), ai)| x + vi + 0.5 * ai)
        .collect())
}

/// Ground-truth fields and interpolant position for a known pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFields {
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub position: Vec<f64>,
}

/// Evaluates the exact velocity, acceleration, and interpolant of the
/// constant-acceleration path through `(x0, x1)` at time `t`.
pub fn exact_field_oracle(x0: &[f64], x1: &[f64], h: f64, t: f64) -> Result<OracleFields> {
    let velocity = velocity_target(x0, x1, h)?;
    let acceleration = acceleration_target(x0, x1, &velocity)?;
    let position = interp_caf(x0, x1, t, &velocity)?;
    Ok(OracleFields {
        velocity,
        acceleration,
        position,
    })
}

/// Analytic path derivative `v + a t` of the constant-acceleration path.
pub fn path_derivative(v: &[f64], a: &[f64], t: f64) -> Vec<f64> {
    v.iter().zip(a).map(|(vi, ai)| vi + ai * t).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;
    use crate::vecmath;

    fn random_pair(rng: &mut DetRng, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let x0: Vec<f64> = (0..dim).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let x1: Vec<f64> = (0..dim).map(|_| rng.uniform(-3.0, 3.0)).collect();
        (x0, x1)
    }

    #[test]
    fn interp_rf_hits_endpoints_and_midpoint() {
        let x0 = [0.0, 0.0];
        let x1 = [2.0, 4.0];
        assert_eq!(interp_rf(&x0, &x1, 0.0).unwrap(), x0);
        assert_eq!(interp_rf(&x0, &x1, 1.0).unwrap(), x1);
        assert_eq!(interp_rf(&x0, &x1, 0.5).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn interp_rejects_time_outside_unit_interval() {
        let x = [0.0];
        assert!(matches!(
            interp_rf(&x, &x, 1.5).unwrap_err(),
            Error::TimeOutOfRange(_)
        ));
        assert!(matches!(
            interp_caf(&x, &x, -0.1, &x).unwrap_err(),
            Error::TimeOutOfRange(_)
        ));
    }

    #[test]
    fn velocity_target_scales_displacement() {
        assert_eq!(
            velocity_target(&[0.0, 0.0], &[1.0, 1.0], 1.0).unwrap(),
            vec![1.0, 1.0]
        );
        assert_eq!(
            velocity_target(&[0.0, 0.0], &[2.0, 0.0], 2.0).unwrap(),
            vec![4.0, 0.0]
        );
        assert_eq!(
            velocity_target(&[0.0, 0.0], &[2.0, 2.0], 1.5).unwrap(),
            vec![3.0, 3.0]
        );
    }

    #[test]
    fn acceleration_sign_tracks_h() {
        // h = 1 is constant velocity: zero acceleration.
        let v1 = velocity_target(&[0.0], &[2.0], 1.0).unwrap();
        assert_eq!(acceleration_target(&[0.0], &[2.0], &v1).unwrap(), vec![0.0]);
        // h = 2 decelerates.
        let v2 = velocity_target(&[0.0, 0.0], &[2.0, 0.0], 2.0).unwrap();
        assert_eq!(
            acceleration_target(&[0.0, 0.0], &[2.0, 0.0], &v2).unwrap(),
            vec![-4.0, 0.0]
        );
        // h = 0.5 accelerates.
        let vh = velocity_target(&[0.0, 0.0], &[2.0, 0.0], 0.5).unwrap();
        assert_eq!(
            acceleration_target(&[0.0, 0.0], &[2.0, 0.0], &vh).unwrap(),
            vec![2.0, 0.0]
        );
    }

    #[test]
    fn interp_caf_matches_hand_evaluation() {
        let x0 = [0.0, 0.0];
        let x1 = [2.0, 0.0];
        let v = velocity_target(&x0, &x1, 2.0).unwrap();
        assert_eq!(interp_caf(&x0, &x1, 0.0, &v).unwrap(), x0);
        assert_eq!(interp_caf(&x0, &x1, 1.0, &v).unwrap(), x1);
        // 0.75 * x0 + 0.25 * x1 + v * 0.25
        assert_eq!(interp_caf(&x0, &x1, 0.5, &v).unwrap(), vec![1.5, 0.0]);
    }

    #[test]
    fn endpoint_identity_holds_for_all_h() {
        let mut rng = DetRng::new(2);
        for _ in 0..200 {
            let (x0, x1) = random_pair(&mut rng, 3);
            for h in [0.5, 1.0, 1.5, 2.0] {
                let v = velocity_target(&x0, &x1, h).unwrap();
                assert_eq!(interp_caf(&x0, &x1, 0.0, &v).unwrap(), x0);
                let end = interp_caf(&x0, &x1, 1.0, &v).unwrap();
                assert!(vecmath::max_abs_diff(&end, &x1) < 1e-12);
            }
        }
    }

    #[test]
    fn kinematic_identity_to_1e12() {
        let mut rng = DetRng::new(3);
        for _ in 0..200 {
            let (x0, x1) = random_pair(&mut rng, 2);
            let h = rng.uniform(0.25, 2.5);
            let t = rng.next_f64();
            let v = velocity_target(&x0, &x1, h).unwrap();
            let a = acceleration_target(&x0, &x1, &v).unwrap();
            let lhs = interp_caf(&x0, &x1, t, &v).unwrap();
            let rhs: Vec<f64> = x0
                .iter()
                .zip(&v)
                .zip(&a)
                .map(|((x, vi), ai)| x + vi * t + 0.5 * ai * t * t)
                .collect();
            assert!(vecmath::max_abs_diff(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn h_equal_one_reduces_to_rectified_flow() {
        let mut rng = DetRng::new(4);
        let (x0, x1) = random_pair(&mut rng, 2);
        let v = velocity_target(&x0, &x1, 1.0).unwrap();
        let a = acceleration_target(&x0, &x1, &v).unwrap();
        assert!(a.iter().all(|ai| ai.abs() < 1e-12));
        for i in 1..10 {
            let t = i as f64 / 10.0;
            let caf = interp_caf(&x0, &x1, t, &v).unwrap();
            let rf = interp_rf(&x0, &x1, t).unwrap();
            assert!(vecmath::max_abs_diff(&caf, &rf) < 1e-12);
        }
    }

    #[test]
    fn closed_form_endpoint_examples() {
        assert_eq!(
            closed_form_endpoint(&[1.0, -2.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap(),
            vec![1.0, -2.0]
        );
        assert_eq!(
            closed_form_endpoint(&[0.0, 0.0], &[4.0, 0.0], &[-4.0, 0.0]).unwrap(),
            vec![2.0, 0.0]
        );
    }

    #[test]
    fn closed_form_inverts_the_targets() {
        let mut rng = DetRng::new(5);
        for _ in 0..200 {
            let (x0, x1) = random_pair(&mut rng, 4);
            let h = rng.uniform(0.25, 2.5);
            let v = velocity_target(&x0, &x1, h).unwrap();
            let a = acceleration_target(&x0, &x1, &v).unwrap();
            let end = closed_form_endpoint(&x0, &v, &a).unwrap();
            assert!(vecmath::max_abs_diff(&end, &x1) < 1e-12);
        }
    }

    #[test]
    fn oracle_matches_interpolant_and_is_time_constant_in_acceleration() {
        let mut rng = DetRng::new(6);
        let (x0, x1) = random_pair(&mut rng, 2);
        let at_zero = exact_field_oracle(&x0, &x1, 1.5, 0.0).unwrap();
        assert_eq!(at_zero.position, x0);
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let o = exact_field_oracle(&x0, &x1, 1.5, t).unwrap();
            assert_eq!(o.acceleration, at_zero.acceleration);
            let v = velocity_target(&x0, &x1, 1.5).unwrap();
            assert_eq!(o.position, interp_caf(&x0, &x1, t, &v).unwrap());
        }
    }

    #[test]
    fn interpolant_time_derivative_matches_v_plus_at() {
        let mut rng = DetRng::new(7);
        let eps = 1e-5;
        for _ in 0..100 {
            let (x0, x1) = random_pair(&mut rng, 2);
            let h = rng.uniform(0.25, 2.5);
            let t = rng.uniform(eps, 1.0 - eps);
            let v = velocity_target(&x0, &x1, h).unwrap();
            let a = acceleration_target(&x0, &x1, &v).unwrap();
            let plus = interp_caf(&x0, &x1, t + eps, &v).unwrap();
            let minus = interp_caf(&x0, &x1, t - eps, &v).unwrap();
            let numeric: Vec<f64> = plus
                .iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / (2.0 * eps))
                .collect();
            let analytic = path_derivative(&v, &a, t);
            assert!(vecmath::max_abs_diff(&numeric, &analytic) < 1e-6);
        }
    }
}
