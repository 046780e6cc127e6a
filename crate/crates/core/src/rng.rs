//! Seed derivation. Every rollout gets its own ChaCha stream keyed by
//! (base seed, purpose tag, index), so results do not depend on which
//! worker thread produced them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const TAG_BATCH: u64 = 0x6261_7463;
pub(crate) const TAG_SELECT: u64 = 0x7365_6c63;
pub(crate) const TAG_EVAL: u64 = 0x6576_616c;
pub(crate) const TAG_MSE: u64 = 0x6d73_6565;
pub(crate) const TAG_SUITE: u64 = 0x7375_6974;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a base seed with a sub-key into a new 64-bit seed.
pub fn derive_seed(base: u64, key: u64) -> u64 {
    splitmix64(base ^ splitmix64(key))
}

/// RNG for stream `index` under `(base, tag)`.
pub fn stream_rng(base: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, tag));
    rng.set_stream(index);
    rng
}
