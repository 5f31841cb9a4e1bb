//! Seeded, splittable pseudo-random streams.
//!
//! Every random draw in the crate goes through [`Stream`], a xoshiro256**
//! generator whose 256-bit state is expanded from `(seed, purpose)` with
//! SplitMix64. Distinct purposes give statistically independent streams for
//! the same seed, and the full state is plain data so it can be written to a
//! checkpoint and restored exactly.
//!
//! Gaussian variates use the basic Box–Muller transform: two uniforms are
//! drawn in order `(u1, u2)` and only the cosine branch is kept.

use std::f64::consts::PI;

/// Named stream purposes. The numeric tags are part of the reproducibility
/// contract; do not renumber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Purpose {
    GeneratorInit,
    DiscriminatorInit,
    RealData,
    Latent,
    Conditions,
    Eval,
    KMeans,
    Pairs,
    Custom(u64),
}

impl Purpose {
    pub fn tag(self) -> u64 {
        match self {
            Purpose::GeneratorInit => 1,
            Purpose::DiscriminatorInit => 2,
            Purpose::RealData => 3,
            Purpose::Latent => 4,
            Purpose::Conditions => 5,
            Purpose::Eval => 6,
            Purpose::KMeans => 7,
            Purpose::Pairs => 8,
            Purpose::Custom(t) => 0x1000 + t,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256** stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    s: [u64; 4],
}

impl Stream {
    /// Stream for `(seed, purpose)`.
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        Self::from_parts(&[seed, purpose.tag()])
    }

    /// Stream keyed by an arbitrary sequence of words, e.g. `(seed, purpose, step)`.
    pub fn from_parts(parts: &[u64]) -> Self {
        let mut sm = 0x6A09_E667_F3BC_C908u64;
        for &p in parts {
            sm ^= p;
            sm = splitmix64(&mut sm);
        }
        let mut s = [0u64; 4];
        for w in s.iter_mut() {
            *w = splitmix64(&mut sm);
        }
        if s == [0; 4] {
            s[0] = 1;
        }
        Stream { s }
    }

    pub fn from_state(s: [u64; 4]) -> Self {
        Stream { s }
    }

    pub fn state(&self) -> [u64; 4] {
        self.s
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by multiply-shift. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        // u1 in (0, 1] keeps the logarithm finite
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }
}
