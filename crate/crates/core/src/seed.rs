//! Stable hashing and per-key random streams.
//!
//! `std`'s hasher is not stable across releases, so keyed streams use FNV-1a.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_extend(FNV_OFFSET, bytes)
}

pub fn fnv1a_extend(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Random stream for `key` under `seed`. Independent of call order.
pub fn keyed_rng(seed: u64, key: &str) -> ChaCha8Rng {
    let h = fnv1a_extend(fnv1a(&seed.to_le_bytes()), key.as_bytes());
    ChaCha8Rng::seed_from_u64(h)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
