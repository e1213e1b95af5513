//! Fixed, seeded hash functions shared by dedup, the classifier and the
//! fallback embedder. Every value here is stable across runs and platforms.

use xxhash_rust::xxh3::{xxh3_128_with_seed, xxh3_64_with_seed};

pub const DEFAULT_SEED: u64 = 0x5eed_cafe_f00d_d00d;

#[inline]
pub fn hash_bytes(bytes: &[u8], seed: u64) -> u64 {
    xxh3_64_with_seed(bytes, seed)
}

#[inline]
pub fn hash_str(s: &str, seed: u64) -> u64 {
    xxh3_64_with_seed(s.as_bytes(), seed)
}

pub fn hash128(bytes: &[u8]) -> u128 {
    xxh3_128_with_seed(bytes, DEFAULT_SEED)
}

/// Hash of a run of pre-hashed tokens, order-sensitive.
pub fn hash_token_run(token_hashes: &[u64], seed: u64) -> u64 {
    let mut buf = [0u8; 8 * 16];
    if token_hashes.len() <= 16 {
        for (i, h) in token_hashes.iter().enumerate() {
            buf[i * 8..i * 8 + 8].copy_from_slice(&h.to_le_bytes());
        }
        xxh3_64_with_seed(&buf[..token_hashes.len() * 8], seed)
    } else {
        let bytes: Vec<u8> = token_hashes.iter().flat_map(|h| h.to_le_bytes()).collect();
        xxh3_64_with_seed(&bytes, seed)
    }
}

/// SplitMix64 finalizer; a bijection on u64.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
