//! Deterministic per-cell RNG streams.
//!
//! Experiments run many independent cells (replicate, fold, method, sample
//! size). Each cell gets its own generator derived from the experiment seed
//! and a tag path, so cells can run in any order (or concurrently) and still
//! reproduce byte-identical output.
//!
//! The derivation is part of the output format and must stay stable: a
//! splitmix64 chain absorbs the seed and each tag, then expands to the
//! 32-byte ChaCha key.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for the stream identified by (seed, tags).
pub fn rng_stream(seed: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut state = splitmix64(seed);
    for &t in tags {
        state = splitmix64(state ^ t);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
