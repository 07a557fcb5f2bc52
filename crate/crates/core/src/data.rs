//! Synthetic source/target distributions and couplings.
//!
//! The 2D catalog (moons, checkerboard, swiss roll, Gaussian mixtures) uses
//! fixed constants chosen so every dataset spans roughly `[-4, 4]^2`, which
//! keeps one set of training hyperparameters workable across datasets:
//!
//! - `two_moons`: two interleaved half circles of radius 2, centers offset
//!   by `(1, -0.5) * 2`, recentered at the origin, plus isotropic Gaussian
//!   noise.
//! - `checkerboard`: uniform over the black cells of a 4x4 board on
//!   `[-4, 4]^2`.
//! - `swiss_roll`: the spiral `0.25 * (t cos t, t sin t)` for
//!   `t in [1.5 pi, 4.5 pi]`, plus noise.
//! - `gaussian_ring(k, r, s)`: `k` equally weighted modes on a circle of
//!   radius `r` with scale `s` (the classic 8-Gaussian target is
//!   `gaussian_ring(8, 3.0, 0.2)`).
//!
//! A [`Coupling`] is an ordered list of `(x0, x1)` pairs. Order is load
//! bearing: coupling-preservation metrics compare by index, so nothing here
//! reorders pairs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;

/// Source/target distribution over `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSpec {
    StandardGaussian(GaussianParams),
    GaussianMixture(MixtureParams),
    TwoMoons(NoiseParams),
    Checkerboard(EmptyParams),
    SwissRoll(NoiseParams),
    PointSet(PointSetParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_dim() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureParams {
    pub means: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmptyParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSetParams {
    pub points: Vec<Vec<f64>>,
}

impl DistributionSpec {
    pub fn standard_gaussian(dim: usize) -> Self {
        DistributionSpec::StandardGaussian(GaussianParams { dim })
    }

    pub fn two_moons(noise: f64) -> Self {
        DistributionSpec::TwoMoons(NoiseParams { noise })
    }

    pub fn checkerboard() -> Self {
        DistributionSpec::Checkerboard(EmptyParams {})
    }

    pub fn swiss_roll(noise: f64) -> Self {
        DistributionSpec::SwissRoll(NoiseParams { noise })
    }

    pub fn point_set(points: Vec<Vec<f64>>) -> Self {
        DistributionSpec::PointSet(PointSetParams { points })
    }

    /// `k` equally weighted Gaussian modes on a circle of radius `radius`.
    pub fn gaussian_ring(modes: usize, radius: f64, scale: f64) -> Self {
        let means = (0..modes)
            .map(|i| {
                let angle = std::f64::consts::TAU * i as f64 / modes as f64;
                vec![radius * angle.cos(), radius * angle.sin()]
            })
            .collect();
        DistributionSpec::GaussianMixture(MixtureParams {
            means,
            weights: vec![1.0 / modes as f64; modes],
            scales: vec![scale; modes],
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::StandardGaussian(p) => p.dim,
            DistributionSpec::GaussianMixture(p) => p.means.first().map_or(0, Vec::len),
            DistributionSpec::TwoMoons(_)
            | DistributionSpec::Checkerboard(_)
            | DistributionSpec::SwissRoll(_) => 2,
            DistributionSpec::PointSet(p) => p.points.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::StandardGaussian(p) => {
                if p.dim == 0 {
                    return Err(Error::InvalidConfig("gaussian dim must be positive".into()));
                }
            }
            DistributionSpec::GaussianMixture(p) => {
                if p.means.is_empty() {
                    return Err(Error::InvalidConfig("mixture needs at least one mode".into()));
                }
                if p.weights.len() != p.means.len() || p.scales.len() != p.means.len() {
                    return Err(Error::InvalidConfig(format!(
                        "mixture arity mismatch: {} means, {} weights, {} scales",
                        p.means.len(),
                        p.weights.len(),
                        p.scales.len()
                    )));
                }
                let dim = p.means[0].len();
                if dim == 0 || p.means.iter().any(|m| m.len() != dim) {
                    return Err(Error::InvalidConfig("mixture means must share one positive dim".into()));
                }
                if p.weights.iter().any(|&w| w <= 0.0) {
                    return Err(Error::InvalidConfig("mixture weights must be positive".into()));
                }
                let sum: f64 = p.weights.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "mixture weights sum to {sum}, expected 1"
                    )));
                }
                if p.scales.iter().any(|&s| s <= 0.0) {
                    return Err(Error::InvalidConfig("mixture scales must be positive".into()));
                }
            }
            DistributionSpec::TwoMoons(p) | DistributionSpec::SwissRoll(p) => {
                if p.noise < 0.0 {
                    return Err(Error::InvalidConfig("noise must be non-negative".into()));
                }
            }
            DistributionSpec::Checkerboard(_) => {}
            DistributionSpec::PointSet(p) => {
                if p.points.is_empty() {
                    return Err(Error::InvalidConfig("point_set needs at least one point".into()));
                }
                let dim = p.points[0].len();
                if dim == 0 || p.points.iter().any(|q| q.len() != dim) {
                    return Err(Error::InvalidConfig("point_set points must share one positive dim".into()));
                }
            }
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. samples; deterministic given `seed`.
pub fn sample_distribution(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    spec.validate()?;
    let mut rng = DetRng::derive(seed, 0x64617461); // "data"
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(sample_one(spec, &mut rng));
    }
    Ok(out)
}

fn sample_one(spec: &DistributionSpec, rng: &mut DetRng) -> Vec<f64> {
    match spec {
        DistributionSpec::StandardGaussian(p) => {
            (0..p.dim).map(|_| rng.standard_normal()).collect()
        }
        DistributionSpec::GaussianMixture(p) => {
            let mut u = rng.next_f64();
            let mut k = p.weights.len() - 1;
            for (i, &w) in p.weights.iter().enumerate() {
                if u < w {
                    k = i;
                    break;
                }
                u -= w;
            }
            p.means[k]
                .iter()
                .map(|&m| m + p.scales[k] * rng.standard_normal())
                .collect()
        }
        DistributionSpec::TwoMoons(p) => {
            let upper = rng.next_u64() & 1 == 0;
            let theta = std::f64::consts::PI * rng.next_f64();
            let (mut x, mut y) = if upper {
                (theta.cos(), theta.sin())
            } else {
                (1.0 - theta.cos(), 0.5 - theta.sin())
            };
            // Center the sklearn-style moons and scale to ~[-3, 3].
            x = (x - 0.5) * 2.0;
            y = (y - 0.25) * 2.0;
            vec![
                x + p.noise * rng.standard_normal(),
                y + p.noise * rng.standard_normal(),
            ]
        }
        DistributionSpec::Checkerboard(_) => {
            let cx = rng.index(4);
            let cy = 2 * rng.index(2) + (cx % 2);
            vec![
                -4.0 + 2.0 * (cx as f64 + rng.next_f64()),
                -4.0 + 2.0 * (cy as f64 + rng.next_f64()),
            ]
        }
        DistributionSpec::SwissRoll(p) => {
            let t = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * rng.next_f64());
            vec![
                0.25 * t * t.cos() + p.noise * rng.standard_normal(),
                0.25 * t * t.sin() + p.noise * rng.standard_normal(),
            ]
        }
        DistributionSpec::PointSet(p) => p.points[rng.index(p.points.len())].clone(),
    }
}

/// How a coupling's pairs were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    Stochastic,
    Deterministic,
}

/// Ordered pairing of source and target points.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
    mode: CouplingMode,
    provenance: String,
}

impl Coupling {
    pub fn new(
        pairs: Vec<(Vec<f64>, Vec<f64>)>,
        mode: CouplingMode,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let provenance = provenance.into();
        if pairs.is_empty() {
            return Err(Error::InvalidConfig("coupling needs at least one pair".into()));
        }
        let dim = pairs[0].0.len();
        if dim == 0 {
            return Err(Error::InvalidConfig("coupling dim must be positive".into()));
        }
        for (x0, x1) in &pairs {
            if x0.len() != dim || x1.len() != dim {
                return Err(Error::ShapeMismatch {
                    context: "coupling pair",
                    expected: dim,
                    got: if x0.len() != dim { x0.len() } else { x1.len() },
                });
            }
        }
        if mode == CouplingMode::Deterministic && provenance.is_empty() {
            return Err(Error::InvalidConfig(
                "deterministic couplings must record their provenance".into(),
            ));
        }
        Ok(Self {
            pairs,
            mode,
            provenance,
        })
    }

    pub fn pairs(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.pairs[0].0.len()
    }

    pub fn mode(&self) -> CouplingMode {
        self.mode
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// First `n` pairs as a new coupling (order preserved).
    pub fn head(&self, n: usize) -> Result<Coupling> {
        Coupling::new(
            self.pairs.iter().take(n).cloned().collect(),
            self.mode,
            self.provenance.clone(),
        )
    }
}

/// Pairs independent draws from `src` and `tgt` by index.
pub fn make_stochastic_coupling(
    src: &DistributionSpec,
    tgt: &DistributionSpec,
    n: usize,
    seed: u64,
) -> Result<Coupling> {
    if src.dim() != tgt.dim() {
        return Err(Error::ShapeMismatch {
            context: "stochastic coupling dims",
            expected: src.dim(),
            got: tgt.dim(),
        });
    }
    let x0 = sample_distribution(src, n, seed ^ 0x736f7572)?; // "sour"
    let x1 = sample_distribution(tgt, n, seed ^ 0x74617267)?; // "targ"
    Coupling::new(
        x0.into_iter().zip(x1).collect(),
        CouplingMode::Stochastic,
        "random pairing of independent draws",
    )
}

/// Two pairs whose straight interpolation paths intersect at `t = 0.5`,
/// point `(0, 0.5)`.
pub fn crossing_fixture() -> Coupling {
    Coupling::new(
        vec![
            (vec![-1.0, 0.0], vec![1.0, 1.0]),
            (vec![-1.0, 1.0], vec![1.0, 0.0]),
        ],
        CouplingMode::Deterministic,
        "analytic crossing fixture",
    )
    .expect("fixture is well formed")
}

const COUPLING_MAGIC: &[u8; 4] = b"CPLG";
const COUPLING_VERSION: u32 = 1;

/// Serializes a coupling: header (magic, version, dim, count, mode,
/// provenance), interleaved little-endian `f64` pairs, trailing CRC32.
pub fn save_coupling(coupling: &Coupling) -> Vec<u8> {
    let dim = coupling.dim();
    let prov = coupling.provenance.as_bytes();
    let mut buf = Vec::with_capacity(29 + prov.len() + coupling.len() * dim * 16);
    buf.extend_from_slice(COUPLING_MAGIC);
    buf.extend_from_slice(&COUPLING_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(coupling.len() as u64).to_le_bytes());
    buf.push(match coupling.mode {
        CouplingMode::Stochastic => 0,
        CouplingMode::Deterministic => 1,
    });
    buf.extend_from_slice(&(prov.len() as u32).to_le_bytes());
    buf.extend_from_slice(prov);
    for (x0, x1) in &coupling.pairs {
        for v in x0.iter().chain(x1) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn load_coupling(bytes: &[u8]) -> Result<Coupling> {
    let need = |n: usize, pos: usize| -> Result<()> {
        if pos + n > bytes.len() {
            Err(Error::Corrupt(format!(
                "truncated coupling: needed {n} bytes at offset {pos}, have {}",
                bytes.len().saturating_sub(pos)
            )))
        } else {
            Ok(())
        }
    };
    let mut pos = 0;
    need(4, pos)?;
    if &bytes[0..4] != COUPLING_MAGIC {
        return Err(Error::Corrupt(format!("bad magic {:02x?}", &bytes[0..4])));
    }
    pos += 4;
    need(4, pos)?;
    let version = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
    if version != COUPLING_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: COUPLING_VERSION,
        });
    }
    pos += 4;
    need(4, pos)?;
    let dim = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    need(8, pos)?;
    let count = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize;
    pos += 8;
    need(1, pos)?;
    let mode = match bytes[pos] {
        0 => CouplingMode::Stochastic,
        1 => CouplingMode::Deterministic,
        other => return Err(Error::Corrupt(format!("unknown coupling mode {other}"))),
    };
    pos += 1;
    need(4, pos)?;
    let prov_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    need(prov_len, pos)?;
    let provenance = String::from_utf8(bytes[pos..pos + prov_len].to_vec())
        .map_err(|_| Error::Corrupt("provenance is not UTF-8".into()))?;
    pos += prov_len;

    if dim == 0 || count == 0 {
        return Err(Error::Corrupt(format!(
            "implausible header: dim {dim}, count {count}"
        )));
    }
    let body = count
        .checked_mul(dim * 16)
        .ok_or_else(|| Error::Corrupt("pair payload overflows".into()))?;
    need(body + 4, pos)?;
    if pos + body + 4 != bytes.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after coupling",
            bytes.len() - (pos + body + 4)
        )));
    }

    let read_point = |pos: &mut usize| -> Vec<f64> {
        let mut p = Vec::with_capacity(dim);
        for _ in 0..dim {
            p.push(f64::from_le_bytes(bytes[*pos..*pos + 8].try_into().unwrap()));
            *pos += 8;
        }
        p
    };
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let x0 = read_point(&mut pos);
        let x1 = read_point(&mut pos);
        pairs.push((x0, x1));
    }

    let stored_crc = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
    let crc = crc32fast::hash(&bytes[..pos]);
    if crc != stored_crc {
        return Err(Error::Corrupt(format!(
            "crc mismatch: stored {stored_crc:08x}, computed {crc:08x}"
        )));
    }

    Coupling::new(pairs, mode, provenance)
}

pub fn write_coupling_file<P: AsRef<Path>>(coupling: &Coupling, path: P) -> Result<()> {
    Ok(std::fs::write(path, save_coupling(coupling))?)
}

pub fn read_coupling_file<P: AsRef<Path>>(path: P) -> Result<Coupling> {
    load_coupling(&std::fs::read(path)?)
}

/// CSV export with columns `x0_0..x0_{d-1}, x1_0..x1_{d-1}`.
pub fn coupling_to_csv(coupling: &Coupling) -> String {
    let dim = coupling.dim();
    let mut out = String::new();
    let header: Vec<String> = (0..dim)
        .map(|i| format!("x0_{i}"))
        .chain((0..dim).map(|i| format!("x1_{i}")))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (x0, x1) in coupling.pairs() {
        let row: Vec<String> = x0.iter().chain(x1).map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
