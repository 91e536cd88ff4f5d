//! Reproducible random streams.
//!
//! Generator: xoshiro256++ (Blackman and Vigna). A `u64` seed is expanded to
//! the 256-bit state by four successive SplitMix64 outputs (increment
//! `0x9E3779B97F4A7C15`), each written little-endian. Derived quantities:
//!
//! - uniform in `[0, 1)`: `(next_u64() >> 11) * 2^-53`
//! - uniform in `(0, 1]`: `((next_u64() >> 11) + 1) * 2^-53`
//! - standard normal: Box-Muller cosine branch, `sqrt(-2 ln u1) * cos(2π u2)`
//!   with `u1` from `(0, 1]` drawn first and `u2` from `[0, 1)` second; the
//!   sine branch is discarded so every normal consumes exactly two words.
//!
//! This is enough to replay any stream in another language from its seed.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

use crate::math;

const TWO_POW_NEG_53: f64 = 1.0 / 9_007_199_254_740_992.0;

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: Xoshiro256PlusPlus,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        let mut sm = SplitMix64::seed_from_u64(seed);
        let mut state = [0u8; 32];
        for chunk in state.chunks_exact_mut(8) {
            chunk.copy_from_slice(&sm.next_u64().to_le_bytes());
        }
        Self {
            inner: Xoshiro256PlusPlus::from_seed(state),
        }
    }

    /// A child stream whose seed is a fixed function of `(seed, tag)`.
    pub fn derived(seed: u64, tag: u64) -> Self {
        Self::new(derive_seed(seed, tag))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_NEG_53
    }

    /// Uniform in `(0, 1]`.
    #[inline]
    pub fn uniform_open_low(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_NEG_53
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open_low();
        let u2 = self.uniform();
        math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2)
    }

    pub fn normal_with(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.normal()
    }
}

/// SplitMix64 finalizer applied to `seed ^ (tag * golden gamma)`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
