//! Deterministic RNG streams for parallel Monte Carlo.
//!
//! Replicates are split into fixed ranges and every range draws from its
//! own stream derived from `(seed, stream, range index)` alone, so results
//! are bit-identical no matter how the ranges are scheduled across worker
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Replicates per range. Small enough to parallelize a million-replicate
/// run, large enough that stream setup cost is negligible.
pub const RANGE_LEN: u64 = 1 << 16;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for one replicate range. `stream` separates independent uses of
/// the same user seed (walk steps, stopped-sum draws, bootstrap, …).
pub fn range_rng(seed: u64, stream: u64, range_index: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut mix = splitmix64(&mut state);
    state ^= stream.wrapping_mul(GOLDEN_GAMMA);
    mix ^= splitmix64(&mut state);
    state ^= range_index.wrapping_mul(GOLDEN_GAMMA);
    mix ^= splitmix64(&mut state);

    let mut key = [0u8; 32];
    let mut word_state = mix;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut word_state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Splits `replicates` into `(start, len)` ranges of at most [`RANGE_LEN`].
pub fn ranges(replicates: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < replicates {
        let len = RANGE_LEN.min(replicates - start);
        out.push((start, len));
        start += len;
    }
    out
}
