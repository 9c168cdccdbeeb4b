//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator. Its 256-bit key is derived from the
//! run seed and a list of stream keys (run index, entity id, ...) by chaining
//! SplitMix64 (`x += 0x9E3779B97F4A7C15; z = (x ^ x>>30) * 0xBF58476D1CE4E5B9;
//! z = (z ^ z>>27) * 0x94D049BB133111EB; z ^ z>>31`). Identical seed and keys
//! always give the identical stream, independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// One SplitMix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root of a family of reproducible streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededRng {
    pub seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Stream for the given key path, e.g. `&[run, habitat]`.
    pub fn stream(&self, keys: &[u64]) -> SimRng {
        let mut state = self.seed;
        let mut acc = splitmix64(&mut state);
        for &k in keys {
            state ^= k.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ acc;
            acc = splitmix64(&mut state);
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}
