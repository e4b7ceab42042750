//! Seeded random streams.
//!
//! Every random quantity in a run comes from a ChaCha8 stream keyed by a
//! 64-bit seed. Independent streams are derived from a base seed with a
//! SplitMix64-style mix so that draw order in one stream never perturbs
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable hash of a base seed and a sequence of components.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// Named sub-streams of a single run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Construction = 1,
    Noise = 2,
    Task = 3,
}

pub fn stream_seed(run_seed: u64, stream: Stream) -> u64 {
    derive_seed(run_seed, &[0x5354_5245_414d, stream as u64])
}
