//! Seeded standard-normal variates: ChaCha8 stream plus Box-Muller.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Name recorded in instance metadata.
pub const GENERATOR_NAME: &str = "chacha8(seed_from_u64)+box-muller";

pub struct NormalRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalRng {
    pub fn new(seed: u64) -> Self {
        NormalRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform in `(0, 1]` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        let u = (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        1.0 - u
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (1.0 - self.uniform())
    }

    pub fn below(&mut self, k: usize) -> usize {
        ((1.0 - self.uniform()) * k as f64) as usize % k.max(1)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * th.sin());
        r * th.cos()
    }

    pub fn normals(&mut self, k: usize) -> Vec<f64> {
        (0..k).map(|_| self.normal()).collect()
    }
}
