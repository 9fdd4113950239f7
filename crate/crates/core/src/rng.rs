//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator whose key is derived from
//! `(root seed, domain)` and whose stream id is derived from two indices
//! (for example level and batch). Normals come from the inverse CDF of
//! open-interval uniforms, so each normal consumes exactly one `u64`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::special::norm_inv_cdf;

/// Domains separate the streams used by different estimators and experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Mc = 1,
    Mlmc = 2,
    LevelProbe = 3,
    StrongError = 4,
    Replication = 5,
    Pilot = 6,
    CovarianceCheck = 7,
    Test = 99,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for an independent sub-run, e.g. replication `index` of an experiment.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    mix(mix(seed, domain as u64), index)
}

/// Random source for one batch of samples.
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, domain: Domain, major: u64, minor: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, domain as u64));
        rng.set_stream(mix(major, minor));
        Self { rng }
    }

    /// Uniform on the open interval (0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        norm_inv_cdf(self.uniform())
    }

    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for g in out {
            *g = self.normal();
        }
    }
}
