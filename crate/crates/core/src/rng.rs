//! Random source for every stochastic procedure in the crate.
//!
//! All randomness goes through ChaCha8, a counter-based stream cipher
//! generator: a `(seed, stream)` pair fully determines the sequence on every
//! platform, and distinct streams never overlap. Jobs that may run in any
//! order (surrogates, bootstrap draws, simulation paths) each get their own
//! stream index, so results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Generator for job `stream` under master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; derives independent child seeds from a parent.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
pub fn uniform(rng: &mut SimRng) -> f64 {
    rng.random::<f64>()
}
