//! Counter-based deterministic random draws.
//!
//! Every consumer derives a fresh ChaCha stream from a structural key
//! (seed, step, purpose, ...) instead of advancing a shared sequential
//! stream. Draws therefore depend only on the key, never on scheduling,
//! which is what makes parallel and serial Monte Carlo loops bit-identical.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha generator keyed by the given words.
pub(crate) fn keyed_rng(parts: &[u64]) -> ChaCha8Rng {
    let mut acc: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        acc = mix64(acc.wrapping_add(0x9E37_79B9_7F4A_7C15) ^ p);
    }
    let mut seed = [0u8; 32];
    let mut s = acc;
    for chunk in seed.chunks_exact_mut(8) {
        s = s.wrapping_add(0x9E37_79B9_7F4A_7C15);
        chunk.copy_from_slice(&mix64(s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Derives a child key word, e.g. a per-run seed from the master seed.
pub(crate) fn derive_key(parts: &[u64]) -> u64 {
    let mut acc: u64 = 0x4528_21E6_38D0_1377;
    for &p in parts {
        acc = mix64(acc.wrapping_add(0x9E37_79B9_7F4A_7C15) ^ p);
    }
    acc
}

/// Uniform draw in `[0, 1)` with 53-bit resolution.
pub(crate) fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

pub(crate) fn uniform_usize(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    debug_assert!(bound > 0);
    (uniform01(rng) * bound as f64) as usize % bound
}

/// Box-Muller transform; `u1` is kept strictly positive so the log is finite.
fn standard_normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / 9_007_199_254_740_992.0);
    let u2 = uniform01(rng);
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = std::f64::consts::TAU * u2;
    (radius * angle.cos(), radius * angle.sin())
}

pub(crate) fn fill_standard_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut i = 0;
    while i + 1 < out.len() {
        let (a, b) = standard_normal_pair(rng);
        out[i] = a;
        out[i + 1] = b;
        i += 2;
    }
    if i < out.len() {
        out[i] = standard_normal_pair(rng).0;
    }
}
