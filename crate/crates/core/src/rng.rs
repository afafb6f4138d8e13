//! Seeded Gaussian sampling: ChaCha20 stream, Box-Muller transform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct GaussianRng {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianRng {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed), spare: None }
    }

    /// One `N(0, 1)` draw; pairs are generated together and the second is cached.
    pub fn standard(&mut self) -> f64 {
        if let Some(s) = self.spare.take() {
            return s;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2 = self.rng.gen::<f64>();
        let rad = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(rad * s);
        rad * c
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.standard();
        }
    }

    pub fn vector(&mut self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill(&mut v);
        v
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_in(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.gen_range(lo..=hi)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen()
    }

    /// Derives an independent stream (for per-item seeding).
    pub fn fork(&mut self) -> Self {
        Self::new(self.rng.gen())
    }
}
