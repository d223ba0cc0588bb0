//! Portable seeded random streams.
//!
//! Every stochastic step in the harness draws from a [`SeedStream`], a
//! SplitMix64 generator whose starting state is derived from
//! `(seed, domain, index)`:
//!
//! ```text
//! mix(z)   = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!            z ^= z >> 27; z *= 0x94D049BB133111EB; z ^ (z >> 31)
//! state0   = mix(mix(seed ^ fnv1a64(domain)) + index)        (wrapping)
//! next()   = state += 0x9E3779B97F4A7C15; mix(state)
//! f64      = (next() >> 11) * 2^-53                         in [0, 1)
//! below(n) = (next() as u128 * n) >> 64                      in [0, n)
//! ```
//!
//! All arithmetic is wrapping 64-bit, so streams are identical on every
//! platform and easy to reproduce in other languages.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// FNV-1a over the UTF-8 bytes of `text`.
pub fn fnv1a64(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// SplitMix64 output mixer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed for `(seed, domain, index)`.
pub fn derive_seed(seed: u64, domain: &str, index: u64) -> u64 {
    mix64(mix64(seed ^ fnv1a64(domain)).wrapping_add(index))
}

#[derive(Clone, Debug)]
pub struct SeedStream {
    state: u64,
}

impl SeedStream {
    pub fn new(seed: u64, domain: &str, index: u64) -> Self {
        SeedStream {
            state: derive_seed(seed, domain, index),
        }
    }

    pub fn from_state(state: u64) -> Self {
        SeedStream { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below() needs a positive bound");
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.next_f64()
    }

    /// Fisher–Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
