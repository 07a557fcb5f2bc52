//! Quantitative flow diagnostics.
//!
//! - Normalized flow straightness `S`: expected squared distance between the
//!   unit pair displacement and the unit instantaneous velocity along the
//!   simulated path. `0 <= S <= 4`; `0` means perfectly straight. The
//!   rectified-flow velocity is the net itself, the constant-acceleration
//!   velocity is `v0 + a(x_t, t, v0) * t`.
//! - Coupling preservation: how closely sampling from `x0` lands on the
//!   `x1` it was paired with, as a mean distance plus a PSNR-style decibel
//!   figure with the target set's diameter as the signal range.
//! - Sliced Wasserstein-1: mean over random unit projections of the 1-D
//!   sorted-match distance; the desk-scale stand-in for distributional
//!   sample quality. The same-distribution value of two fresh draws serves
//!   as a noise floor elsewhere in the suite.
//!
//! Every report carries a bootstrap 95% confidence half-width so callers can
//! tell orderings from noise.

use crate::data::Coupling;
use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::sample::{sample_caf, sample_rf, AccelerationField, TrajectoryLog, VelocityField};
use crate::vecmath;

/// Fraction of degenerate terms a straightness estimate may skip.
pub const NFSS_SKIP_BUDGET: f64 = 0.05;

/// PSNR-analog ceiling for an exact sampler.
pub const PSNR_CAP_DB: f64 = 300.0;

const DEGENERATE_NORM: f64 = 1e-12;
const BOOTSTRAP_RESAMPLES: usize = 200;

/// One scalar metric with its estimation context.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub n_samples: usize,
    /// Free-form echo of how the value was computed.
    pub config: String,
    /// Bootstrap 95% confidence half-width.
    pub ci_halfwidth: f64,
}

impl MetricReport {
    fn from_terms(name: &str, config: String, terms: &[f64], ci_seed: u64) -> Self {
        let value = mean(terms);
        Self {
            name: name.to_string(),
            value,
            n_samples: terms.len(),
            config,
            ci_halfwidth: bootstrap_ci_halfwidth(terms, ci_seed),
        }
    }

    pub const CSV_HEADER: &'static str = "name,value,ci,n,config";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.name, self.value, self.ci_halfwidth, self.n_samples, self.config
        )
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// 1.96 times the bootstrap standard error of the mean.
pub fn bootstrap_ci_halfwidth(values: &[f64], seed: u64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut rng = DetRng::derive(seed, 0x63695f6277); // "ci_bw"
    let mut resample_means = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut acc = 0.0;
        for _ in 0..values.len() {
            acc += values[rng.index(values.len())];
        }
        resample_means.push(acc / values.len() as f64);
    }
    let m = mean(&resample_means);
    let var = resample_means.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
        / (resample_means.len() - 1) as f64;
    1.96 * var.sqrt()
}

struct StraightnessAccumulator {
    terms: Vec<f64>,
    skipped: usize,
}

impl StraightnessAccumulator {
    fn new() -> Self {
        Self {
            terms: Vec::new(),
            skipped: 0,
        }
    }

    fn push(&mut self, displacement: &[f64], xdot: &[f64]) {
        let dn = vecmath::norm(displacement);
        let wn = vecmath::norm(xdot);
        if dn < DEGENERATE_NORM || wn < DEGENERATE_NORM {
            self.skipped += 1;
            return;
        }
        let term: f64 = displacement
            .iter()
            .zip(xdot)
            .map(|(d, w)| {
                let diff = d / dn - w / wn;
                diff * diff
            })
            .sum();
        self.terms.push(term);
    }

    fn finish(self, name: &str, config: String, total: usize, ci_seed: u64) -> Result<MetricReport> {
        if self.skipped as f64 > NFSS_SKIP_BUDGET * total as f64 {
            return Err(Error::TooManySkips {
                skipped: self.skipped,
                total,
                budget: NFSS_SKIP_BUDGET * 100.0,
            });
        }
        if self.terms.is_empty() {
            return Err(Error::Degenerate("no straightness terms survived".into()));
        }
        Ok(MetricReport::from_terms(name, config, &self.terms, ci_seed))
    }
}

/// Straightness of a rectified-flow model over a coupling, sampled on an
/// `n_t`-step Euler grid per pair.
pub fn nfss_rf<V: VelocityField + ?Sized>(
    field: &V,
    coupling: &Coupling,
    n_t: usize,
    ci_seed: u64,
) -> Result<MetricReport> {
    if n_t == 0 {
        return Err(Error::InvalidConfig("nfss needs at least one t sample".into()));
    }
    let mut acc = StraightnessAccumulator::new();
    for (x0, x1) in coupling.pairs() {
        let displacement = vecmath::sub(x1, x0);
        let (_, log) = sample_rf(x0, field, n_t)?;
        for i in 0..n_t {
            let xdot = field.velocity(&log.points[i], log.times[i])?;
            acc.push(&displacement, &xdot);
        }
    }
    acc.finish(
        "nfss_rf",
        format!("pairs={};n_t={n_t}", coupling.len()),
        coupling.len() * n_t,
        ci_seed,
    )
}

/// Straightness of a constant-acceleration model:
/// `xdot = v0 + a(x_t, t, v0) * t` along the matching sampler's path.
pub fn nfss_caf<V: VelocityField + ?Sized, A: AccelerationField + ?Sized>(
    v_field: &V,
    a_field: &A,
    coupling: &Coupling,
    n_t: usize,
    ci_seed: u64,
) -> Result<MetricReport> {
    if n_t == 0 {
        return Err(Error::InvalidConfig("nfss needs at least one t sample".into()));
    }
    let mut acc = StraightnessAccumulator::new();
    for (x0, x1) in coupling.pairs() {
        let displacement = vecmath::sub(x1, x0);
        let v0 = v_field.velocity(x0, 0.0)?;
        let (_, log) = sample_caf(x0, v_field, a_field, n_t)?;
        for i in 0..n_t {
            let t = log.times[i];
            let a = a_field.acceleration(&log.points[i], t, &v0)?;
            let xdot: Vec<f64> = v0.iter().zip(&a).map(|(v, ai)| v + ai * t).collect();
            acc.push(&displacement, &xdot);
        }
    }
    acc.finish(
        "nfss_caf",
        format!("pairs={};n_t={n_t}", coupling.len()),
        coupling.len() * n_t,
        ci_seed,
    )
}

/// Coupling-preservation result: mean endpoint distance plus a PSNR analog
/// `10 log10(range^2 / mse)` with `range` the target set diameter and `mse`
/// the per-coordinate mean squared error.
#[derive(Debug, Clone)]
pub struct CouplingPreservation {
    pub mean_error: MetricReport,
    pub psnr_analog: f64,
}

pub fn coupling_preservation<F>(
    coupling: &Coupling,
    sampler: F,
    ci_seed: u64,
) -> Result<CouplingPreservation>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let dim = coupling.dim() as f64;
    let mut errors = Vec::with_capacity(coupling.len());
    let mut sq_sum = 0.0;
    for (x0, x1) in coupling.pairs() {
        let x1_hat = sampler(x0)?;
        if x1_hat.len() != x1.len() {
            return Err(Error::ShapeMismatch {
                context: "coupling_preservation sampler output",
                expected: x1.len(),
                got: x1_hat.len(),
            });
        }
        let err = vecmath::dist(&x1_hat, x1);
        sq_sum += err * err;
        errors.push(err);
    }
    let mse = sq_sum / (coupling.len() as f64 * dim);

    let targets: Vec<&[f64]> = coupling.pairs().iter().map(|(_, x1)| x1.as_slice()).collect();
    let range = diameter(&targets);
    if range < DEGENERATE_NORM {
        return Err(Error::Degenerate(
            "target set has zero diameter; PSNR analog undefined".into(),
        ));
    }
    let psnr_analog = if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (range * range / mse).log10()).min(PSNR_CAP_DB)
    };

    Ok(CouplingPreservation {
        mean_error: MetricReport::from_terms(
            "coupling_preservation",
            format!("pairs={}", coupling.len()),
            &errors,
            ci_seed,
        ),
        psnr_analog,
    })
}

fn diameter(points: &[&[f64]]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(vecmath::dist(a, b));
        }
    }
    best
}

/// Sliced Wasserstein-1 distance between two empirical samples: the mean
/// over `n_projections` random unit directions of the 1-D sorted-match
/// distance between the projections.
pub fn sliced_wasserstein(
    samples_a: &[Vec<f64>],
    samples_b: &[Vec<f64>],
    n_projections: usize,
    seed: u64,
) -> Result<MetricReport> {
    if samples_a.len() < 100 || samples_b.len() < 100 {
        return Err(Error::InvalidConfig(format!(
            "sliced_wasserstein needs at least 100 samples per side, got {} and {}",
            samples_a.len(),
            samples_b.len()
        )));
    }
    if n_projections == 0 {
        return Err(Error::InvalidConfig("need at least one projection".into()));
    }
    let dim = samples_a[0].len();
    if dim == 0 || samples_b[0].len() != dim {
        return Err(Error::ShapeMismatch {
            context: "sliced_wasserstein dims",
            expected: dim,
            got: samples_b[0].len(),
        });
    }

    let mut rng = DetRng::derive(seed, 0x737764); // "swd"
    let mut direction = vec![0.0; dim];
    let mut proj_a = vec![0.0; samples_a.len()];
    let mut proj_b = vec![0.0; samples_b.len()];
    let mut per_projection = Vec::with_capacity(n_projections);
    for _ in 0..n_projections {
        rng.unit_vector(&mut direction);
        for (p, s) in proj_a.iter_mut().zip(samples_a) {
            *p = vecmath::dot(s, &direction);
        }
        for (p, s) in proj_b.iter_mut().zip(samples_b) {
            *p = vecmath::dot(s, &direction);
        }
        proj_a.sort_unstable_by(f64::total_cmp);
        proj_b.sort_unstable_by(f64::total_cmp);
        per_projection.push(wasserstein_1d_sorted(&proj_a, &proj_b));
    }

    Ok(MetricReport::from_terms(
        "sliced_wasserstein",
        format!(
            "n_a={};n_b={};projections={n_projections}",
            samples_a.len(),
            samples_b.len()
        ),
        &per_projection,
        seed,
    ))
}

/// 1-D Wasserstein-1 between sorted samples: the sorted match for equal
/// sizes, quantile interpolation otherwise.
fn wasserstein_1d_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    }
    let m = a.len().max(b.len());
    (0..m)
        .map(|i| {
            let q = (i as f64 + 0.5) / m as f64;
            (quantile_sorted(a, q) - quantile_sorted(b, q)).abs()
        })
        .sum::<f64>()
        / m as f64
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let idx = q * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = idx - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Max perpendicular deviation of a logged path from its own chord,
/// normalized by the chord length. Translation- and rotation-invariant.
pub fn straightness_per_trajectory(log: &TrajectoryLog) -> Result<f64> {
    if log.len() < 3 {
        return Err(Error::Degenerate(format!(
            "per-trajectory straightness needs at least 3 points, got {}",
            log.len()
        )));
    }
    let start = log.start();
    let chord = vecmath::sub(log.end(), start);
    let chord_len = vecmath::norm(&chord);
    if chord_len < DEGENERATE_NORM {
        return Err(Error::Degenerate("chord length below 1e-12".into()));
    }
    let unit: Vec<f64> = chord.iter().map(|c| c / chord_len).collect();
    let mut max_dev: f64 = 0.0;
    for p in &log.points {
        let rel = vecmath::sub(p, start);
        let along = vecmath::dot(&rel, &unit);
        let perp_sq = vecmath::dot(&rel, &rel) - along * along;
        max_dev = max_dev.max(perp_sq.max(0.0).sqrt());
    }
    Ok(max_dev / chord_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_distribution, Coupling, CouplingMode, DistributionSpec};
    use crate::sample::{sample_caf, Direction, ExactPairField};

    fn one_pair_coupling(x0: Vec<f64>, x1: Vec<f64>) -> Coupling {
        Coupling::new(vec![(x0, x1)], CouplingMode::Deterministic, "test").unwrap()
    }

    #[test]
    fn exact_caf_fields_are_perfectly_straight_for_any_h() {
        let mut rng = DetRng::new(1);
        for h in [0.5, 1.0, 1.5, 2.0] {
            let x0: Vec<f64> = (0..2).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let x1: Vec<f64> = (0..2).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let oracle = ExactPairField::new(&x0, &x1, h).unwrap();
            let coupling = one_pair_coupling(x0, x1);
            let report = nfss_caf(&oracle, &oracle, &coupling, 32, 0).unwrap();
            assert!(report.value < 1e-10, "h={h}: S={}", report.value);
        }
    }

    #[test]
    fn orthogonal_velocity_scores_two() {
        let coupling = one_pair_coupling(vec![0.0, 0.0], vec![1.0, 0.0]);
        let sideways = |_x: &[f64], _t: f64| vec![0.0, 1.0];
        let report = nfss_rf(&sideways, &coupling, 1, 0).unwrap();
        assert!((report.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nfss_is_bounded_by_four() {
        let mut rng = DetRng::new(7);
        let model = crate::nn::MlpModel::new(&[3, 16, 2], crate::nn::Activation::Tanh, 5).unwrap();
        let field = crate::sample::MlpVelocity { model: &model };
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..20)
            .map(|_| {
                (
                    (0..2).map(|_| rng.uniform(-2.0, 2.0)).collect(),
                    (0..2).map(|_| rng.uniform(-2.0, 2.0)).collect(),
                )
            })
            .collect();
        let coupling = Coupling::new(pairs, CouplingMode::Stochastic, "").unwrap();
        let report = nfss_rf(&field, &coupling, 8, 0).unwrap();
        assert!(report.value >= 0.0 && report.value <= 4.0, "{}", report.value);
    }

    #[test]
    fn degenerate_pairs_abort_past_the_skip_budget() {
        // x1 == x0 makes every displacement degenerate.
        let coupling = one_pair_coupling(vec![1.0, 1.0], vec![1.0, 1.0]);
        let field = |_x: &[f64], _t: f64| vec![1.0, 0.0];
        let err = nfss_rf(&field, &coupling, 4, 0).unwrap_err();
        assert!(matches!(err, Error::TooManySkips { .. }), "{err}");
    }

    #[test]
    fn exact_sampler_preserves_the_coupling_perfectly() {
        let fixture = crate::data::crossing_fixture();
        let report = coupling_preservation(
            &fixture,
            |x0| {
                let (x0v, x1v) = fixture
                    .pairs()
                    .iter()
                    .find(|(a, _)| a.as_slice() == x0)
                    .unwrap();
                let oracle = ExactPairField::new(x0v, x1v, 2.0).unwrap();
                Ok(sample_caf(x0, &oracle, &oracle, 1)?.0)
            },
            0,
        )
        .unwrap();
        assert!(report.mean_error.value < 1e-10);
        assert_eq!(report.psnr_analog, PSNR_CAP_DB);
    }

    #[test]
    fn identity_sampler_scores_the_mean_displacement() {
        let fixture = crate::data::crossing_fixture();
        let report = coupling_preservation(&fixture, |x0| Ok(x0.to_vec()), 0).unwrap();
        let expect = fixture
            .pairs()
            .iter()
            .map(|(x0, x1)| vecmath::dist(x0, x1))
            .sum::<f64>()
            / fixture.len() as f64;
        assert!((report.mean_error.value - expect).abs() < 1e-12);
        assert!(report.psnr_analog < PSNR_CAP_DB);
    }

    #[test]
    fn identical_sample_sets_have_zero_distance() {
        let samples = sample_distribution(&DistributionSpec::standard_gaussian(2), 200, 3).unwrap();
        let report = sliced_wasserstein(&samples, &samples, 16, 0).unwrap();
        assert_eq!(report.value, 0.0);
        assert_eq!(report.ci_halfwidth, 0.0);
    }

    #[test]
    fn point_masses_at_zero_and_one_are_distance_one() {
        let a = vec![vec![0.0]; 100];
        let b = vec![vec![1.0]; 100];
        let report = sliced_wasserstein(&a, &b, 8, 1).unwrap();
        assert!((report.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_sample_sets_are_rejected() {
        let a = vec![vec![0.0]; 99];
        let b = vec![vec![1.0]; 100];
        assert!(sliced_wasserstein(&a, &b, 8, 1).is_err());
    }

    #[test]
    fn sliced_wasserstein_is_a_pseudometric() {
        let spec = DistributionSpec::standard_gaussian(2);
        let x = sample_distribution(&spec, 150, 1).unwrap();
        let y = sample_distribution(&spec, 150, 2).unwrap();
        let z = sample_distribution(&DistributionSpec::two_moons(0.05), 150, 3).unwrap();
        let xy = sliced_wasserstein(&x, &y, 64, 9).unwrap().value;
        let yx = sliced_wasserstein(&y, &x, 64, 9).unwrap().value;
        assert!((xy - yx).abs() < 1e-12, "symmetry: {xy} vs {yx}");
        let xz = sliced_wasserstein(&x, &z, 64, 9).unwrap().value;
        let yz = sliced_wasserstein(&y, &z, 64, 9).unwrap().value;
        assert!(xz <= xy + yz + 1e-12, "triangle: {xz} > {xy} + {yz}");
    }

    #[test]
    fn exact_caf_log_is_collinear() {
        let x0 = vec![-1.0, 0.5];
        let x1 = vec![2.0, -1.5];
        let oracle = ExactPairField::new(&x0, &x1, 2.0).unwrap();
        let (_, log) = sample_caf(&x0, &oracle, &oracle, 10).unwrap();
        assert!(straightness_per_trajectory(&log).unwrap() < 1e-12);
    }

    #[test]
    fn semicircle_deviates_by_half_its_chord() {
        let n = 64;
        let mut log = TrajectoryLog {
            times: Vec::new(),
            points: Vec::new(),
            meta: crate::sample::TrajectoryMeta {
                model: String::new(),
                n_steps: n,
                h: None,
                direction: Direction::Forward,
            },
        };
        for i in 0..=n {
            let theta = std::f64::consts::PI * i as f64 / n as f64;
            log.times.push(i as f64 / n as f64);
            log.points.push(vec![theta.cos(), theta.sin()]);
        }
        let s = straightness_per_trajectory(&log).unwrap();
        assert!((s - 0.5).abs() < 1e-12, "{s}");
    }

    #[test]
    fn per_trajectory_straightness_is_rigid_motion_invariant() {
        let x0 = vec![0.0, 0.0];
        let bendy = |x: &[f64], t: f64| vec![1.0, (4.0 * t).sin() + 0.2 * x[0]];
        let (_, log) = crate::sample::sample_rf(&x0, &bendy, 16).unwrap();
        let base = straightness_per_trajectory(&log).unwrap();

        let (angle, shift) = (0.7_f64, [3.0, -2.0]);
        let mut moved = log.clone();
        for p in moved.points.iter_mut() {
            let (x, y) = (p[0], p[1]);
            p[0] = angle.cos() * x - angle.sin() * y + shift[0];
            p[1] = angle.sin() * x + angle.cos() * y + shift[1];
        }
        let transformed = straightness_per_trajectory(&moved).unwrap();
        assert!((base - transformed).abs() < 1e-12);
    }

    #[test]
    fn degenerate_chord_is_reported() {
        let log = TrajectoryLog {
            times: vec![0.0, 0.5, 1.0],
            points: vec![vec![1.0, 1.0]; 3],
            meta: crate::sample::TrajectoryMeta {
                model: String::new(),
                n_steps: 2,
                h: None,
                direction: Direction::Forward,
            },
        };
        assert!(matches!(
            straightness_per_trajectory(&log).unwrap_err(),
            Error::Degenerate(_)
        ));
    }

    #[test]
    fn csv_row_round_trips_the_fields() {
        let report = MetricReport {
            name: "nfss_rf".into(),
            value: 0.25,
            n_samples: 128,
            config: "pairs=4;n_t=32".into(),
            ci_halfwidth: 0.01,
        };
        assert_eq!(MetricReport::CSV_HEADER, "name,value,ci,n,config");
        assert_eq!(report.csv_row(), "nfss_rf,0.25,0.01,128,pairs=4;n_t=32");
    }
}
