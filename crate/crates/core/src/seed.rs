//! Stable seed derivation.
//!
//! Every random quantity in the crate draws from a ChaCha stream whose seed
//! is derived from a master seed and a list of integer tags (experiment
//! size, trial index, column index, ...). The derivation is a fixed
//! SplitMix64 chain, so results are portable across platforms and do not
//! depend on iteration order: any consumer can reconstruct the stream of a
//! single column or trial in isolation.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a tag path.
///
/// Distinct tag paths yield statistically independent seeds; the same path
/// always yields the same seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master;
    let mut out = splitmix_next(&mut state);
    for &tag in tags {
        state ^= tag.wrapping_mul(GAMMA) ^ 0x5851_F42D_4C95_7F2D;
        out = splitmix_next(&mut state);
    }
    out
}

/// ChaCha generator for a derived seed path.
pub fn rng_for(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
