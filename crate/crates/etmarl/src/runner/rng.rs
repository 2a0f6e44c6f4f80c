//! Deterministic rng stream derivation.
//!
//! Every stochastic consumer gets its own ChaCha stream keyed by
//! (seed, purpose, index) through splitmix64 mixing, so parallel rollout
//! and seed workers never perturb each other's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive an independent stream for (seed, purpose, index).
pub fn stream(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let mut state = seed;
    let _ = splitmix64(&mut state);
    state ^= fnv1a(purpose.as_bytes());
    let _ = splitmix64(&mut state);
    state ^= index.wrapping_mul(0xD6E8FEB86659FD93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
