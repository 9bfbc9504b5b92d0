//! Seeded, platform-independent random streams and counter-based seed splitting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. A bijection on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `index` from `master`.
///
/// For a fixed master the map `index -> seed` is injective: `index * GOLDEN`
/// is a bijection (GOLDEN is odd), adding a constant is a bijection, and so is
/// `mix64`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master).wrapping_add(index.wrapping_mul(GOLDEN)))
}

/// Named sub-streams so unrelated consumers of one seed never collide.
pub fn stream_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    split_seed(seed, h)
}
