//! Stable derivation of per-purpose RNG seeds from a single run seed.
//!
//! Every stochastic choice in the toolkit (sampling, shuffling, noising,
//! initialization, batch order) draws from a ChaCha stream seeded through
//! this chain, so one integer pins the whole pipeline and independent
//! purposes never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a purpose label into a new seed. The chain is
/// platform-independent and stable across releases.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut state = splitmix64(base ^ 0xD6E8_FEB8_6659_FD93);
    for &byte in label.as_bytes() {
        state = splitmix64(state ^ u64::from(byte));
    }
    state
}

/// A ChaCha stream for one purpose under a base seed.
pub fn rng_for(base: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, label))
}
