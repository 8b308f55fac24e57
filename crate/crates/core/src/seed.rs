//! Seed derivation: every random draw in the crate comes from a named
//! sub-stream of one master seed, so a whole pipeline run is reproducible
//! from a single number.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a sub-seed from a master seed, a stream name, and an index.
///
/// FNV-1a over the name, mixed with the master seed and index through
/// splitmix64 finalization. Stable across platforms.
pub fn substream(master: u64, name: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(master ^ h.rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// RNG for a named sub-stream.
pub fn rng(master: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream(master, name, index))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
