//! Deterministic substream derivation.
//!
//! All randomness in a run flows from a single root seed. Consumers never
//! share an RNG; each obtains its own stream keyed by a name (and optionally
//! an index, e.g. one stream per rejection-sampling slot) so that results do
//! not depend on evaluation order or worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(name: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// 64-bit seed for substream `name` of `root`, slot `index`.
pub fn derive_seed(root: u64, name: &str, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ fnv1a(name)) ^ index)
}

/// Named substream of the root seed. Equals `indexed(root, name, 0)`.
pub fn stream(root: u64, name: &str) -> ChaCha8Rng {
    indexed(root, name, 0)
}

/// Indexed substream, e.g. one per sample slot in a parallel sampler.
pub fn indexed(root: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, name, index))
}
