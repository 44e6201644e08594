//! Deterministic per-item RNG derivation.
//!
//! Every random draw in the toolkit comes from a `ChaCha8Rng` keyed by a base
//! seed and a short path of indices (item number, spec position, ...), so that
//! results never depend on iteration order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `seed` and `path` into a 256-bit ChaCha key.
pub fn derive_seed(seed: u64, path: &[u64]) -> [u8; 32] {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17) ^ acc;
        acc = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

pub fn item_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, path))
}
