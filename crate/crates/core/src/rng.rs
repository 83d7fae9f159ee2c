//! Seed derivation and the generators used throughout the crate.
//!
//! Every random draw comes from a [`ChaCha8Rng`] whose seed is derived from a
//! run seed and a purpose tag, so results never depend on call order between
//! unrelated components.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

pub use rand_chacha::ChaCha8Rng as Rng;

/// SplitMix64 finalizer.
const fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a seed with a sub-stream identifier.
pub const fn derive(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Hashes a purpose tag into a stream identifier.
pub fn tag(name: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Generator for `seed` specialised to the named purpose.
pub fn for_purpose(seed: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag(purpose)))
}

/// Generator for an indexed stream (e.g. one per point and expert).
pub fn for_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
