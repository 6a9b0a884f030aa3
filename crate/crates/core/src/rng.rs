//! Deterministic, counter-addressable random streams.
//!
//! Every stochastic draw in the simulator is indexed: stream `s`, draw `i`
//! always yields the same variate for a given seed, on every platform. This
//! is what makes mid-stream attack injection reproducible — the eavesdropper
//! consumes her own stream without perturbing the channel's.
//!
//! Backed by ChaCha8, whose keystream is a pure function of (key, stream,
//! block counter), so repositioning is cheap and exact. Sequential draws take
//! the fast path and never reposition.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream id for the quantum channel's sub-draws (base count and the two
/// noise flags).
pub const CHANNEL_STREAM: u64 = 0;

/// Stream id for the eavesdropper's randomness.
pub const ATTACK_STREAM: u64 = 1;

/// Multiplier of one 64-bit draw in ChaCha 32-bit words.
const WORDS_PER_DRAW: u128 = 2;

/// A seeded uniform stream addressable by draw index.
#[derive(Debug, Clone)]
pub struct CounterRng {
    rng: ChaCha8Rng,
    /// Index of the draw the underlying generator will produce next.
    position: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, position: 0 }
    }

    /// The uniform variate in `[0, 1)` at the given draw index.
    pub fn uniform_at(&mut self, index: u64) -> f64 {
        if index != self.position {
            self.rng.set_word_pos(u128::from(index) * WORDS_PER_DRAW);
            self.position = index;
        }
        self.position += 1;
        // 53 random mantissa bits, the standard u64 → [0,1) construction.
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// The next uniform variate in sequence.
    pub fn next_uniform(&mut self) -> f64 {
        let index = self.position;
        self.uniform_at(index)
    }

    /// Index of the next sequential draw.
    pub fn position(&self) -> u64 {
        self.position
    }
}

/// SplitMix64 mixer; used to derive identifiers and sub-seeds from a session
/// seed without touching the ChaCha streams.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a per-cell or per-run sub-seed from a base seed and an index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut state = seed ^ index.wrapping_mul(0xa076_1d64_78bd_642f);
    splitmix64(&mut state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_matches_addressed() {
        let mut seq = CounterRng::new(42, CHANNEL_STREAM);
        let sequential: Vec<f64> = (0..100).map(|_| seq.next_uniform()).collect();

        let mut addr = CounterRng::new(42, CHANNEL_STREAM);
        for (i, &expected) in sequential.iter().enumerate().rev() {
            assert_eq!(addr.uniform_at(i as u64), expected);
        }
    }

    #[test]
    fn streams_are_distinct() {
        let mut a = CounterRng::new(7, CHANNEL_STREAM);
        let mut b = CounterRng::new(7, ATTACK_STREAM);
        let same = (0..32).filter(|_| a.next_uniform() == b.next_uniform()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn variates_are_in_unit_interval() {
        let mut rng = CounterRng::new(1, CHANNEL_STREAM);
        for _ in 0..10_000 {
            let u = rng.next_uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn repositioning_is_exact() {
        let mut rng = CounterRng::new(99, CHANNEL_STREAM);
        let at_1000 = rng.uniform_at(1000);
        rng.uniform_at(0);
        assert_eq!(rng.uniform_at(1000), at_1000);
    }

    #[test]
    fn derive_seed_spreads_indices() {
        let seeds: std::collections::HashSet<u64> =
            (0..1000).map(|i| derive_seed(5, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
