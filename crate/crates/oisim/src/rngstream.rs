//! Deterministic random substreams.
//!
//! Every source of randomness in the crate is derived from a single master
//! seed plus a list of structural tags (replicate index, evaluation id, ...).
//! Parallel workers each derive their own substream, so results are
//! independent of scheduling and worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; good avalanche, cheap, stable across platforms.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with structural tags into a single 64-bit stream key.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &tag in tags {
        state ^= tag;
        acc ^= splitmix64(&mut state);
    }
    acc
}

/// A seeded ChaCha stream for `(seed, tags)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tags))
}
