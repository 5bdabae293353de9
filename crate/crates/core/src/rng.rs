//! Named random sub-streams derived from a single 64-bit seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for one named component (`"world"`, `"episodes"`, `"init"`, `"sampling"`, ...).
pub fn substream(seed: u64, name: &str) -> Rng {
    Rng::seed_from_u64(splitmix(seed ^ splitmix(fnv1a(name.as_bytes()))))
}

/// Stream keyed by component and an item key, e.g. an episode id, so that
/// parallel consumers get order-independent randomness.
pub fn keyed_substream(seed: u64, name: &str, key: &str) -> Rng {
    let k = splitmix(fnv1a(name.as_bytes())) ^ splitmix(fnv1a(key.as_bytes()).rotate_left(17));
    Rng::seed_from_u64(splitmix(seed ^ k))
}
