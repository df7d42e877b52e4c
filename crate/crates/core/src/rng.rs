//! Seeded random streams.
//!
//! Every stochastic component takes a caller-owned generator; this module
//! only fixes which generator is used and how independent per-cell streams
//! are derived from a global seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PlanRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> PlanRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a seed for one cell of a run from a global seed and a list of ids.
pub fn derive_seed(global: u64, ids: &[u64]) -> u64 {
    ids.iter().fold(mix(global), |acc, &id| mix(acc ^ mix(id)))
}
