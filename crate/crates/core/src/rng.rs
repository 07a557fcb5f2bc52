//! Counter-based deterministic random number generator.
//!
//! Every stochastic choice in this crate (parameter init, data sampling,
//! minibatch selection, projection directions) flows through [`DetRng`], a
//! SplitMix64 generator. The state advances by a fixed odd increment per
//! draw, so a stream is a pure function of `(seed, draw index)` and runs are
//! bit-reproducible on one machine regardless of call-site ordering between
//! independent streams.
//!
//! Independent substreams are derived with [`DetRng::derive`], which mixes a
//! stream tag into the seed instead of splitting state, keeping parent and
//! child streams decorrelated.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 stream. Cheap to construct, `Clone` forks an identical stream.
#[derive(Debug, Clone)]
pub struct DetRng {
    state: u64,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        Self {
            state: mix64(seed.wrapping_add(GOLDEN_GAMMA)),
        }
    }

    /// Derives an independent substream identified by `tag`.
    pub fn derive(seed: u64, tag: u64) -> Self {
        Self::new(seed ^ mix64(tag.wrapping_add(GOLDEN_GAMMA)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift keeps the draw count fixed per call.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw via Box-Muller. Consumes two uniforms per call.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1], keeps ln finite
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fills `out` with a uniformly random unit vector.
    pub fn unit_vector(&mut self, out: &mut [f64]) {
        loop {
            let mut norm_sq = 0.0;
            for x in out.iter_mut() {
                *x = self.standard_normal();
                norm_sq += *x * *x;
            }
            if norm_sq > 1e-24 {
                let inv = norm_sq.sqrt().recip();
                for x in out.iter_mut() {
                    *x *= inv;
                }
                return;
            }
        }
    }
}
