//! The quantum channel: one correlated twin count per bit interval, delivered
//! identically to Alice and Bob, plus independent per-mode thermal noise.
//!
//! The defining property of the source is that both modes carry the *same*
//! base count — the shot noise is common to the two beams, so the noiseless
//! Pearson correlation between the two count streams is exactly 1. Channel
//! noise is modeled as at most one extra photon per mode per bit interval,
//! arriving independently on each side with probability ε; the channel itself
//! is lossless, so noise photons are the only error mechanism.

use serde::Serialize;
use thiserror::Error;

use crate::photon::{tmcc_pmf, TruncationPolicy};
use crate::rng::{CounterRng, CHANNEL_STREAM};
use crate::{Amplitude, PhotonDistribution};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("noise probability must lie in [0, 1], got {0}")]
    InvalidNoise(f64),
    #[error("correlation requires at least two count pairs, got {0}")]
    NotEnoughSamples(usize),
}

/// Per-mode, per-bit probability of detecting exactly one extra thermal
/// photon. Noise events in the two modes are independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct NoiseModel {
    epsilon: f64,
}

impl NoiseModel {
    pub fn new(epsilon: f64) -> Result<Self, ChannelError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(ChannelError::InvalidNoise(epsilon));
        }
        Ok(Self { epsilon })
    }

    /// Noiseless channel.
    pub fn none() -> Self {
        Self { epsilon: 0.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// The two detector readings for one bit interval.
///
/// For an unattacked channel, `alice_count = base_count + alice_noise` and
/// `bob_count = base_count + bob_noise`. Eavesdropper models replace the base
/// component of Bob's count while leaving the recorded twin draw and noise
/// flags intact, so attacked pairs deliberately break the Bob-side identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CountPair {
    /// The pre-noise twin value, common to both modes at emission.
    pub base_count: u32,
    /// Whether Alice's detector caught a noise photon this interval.
    pub alice_noise: bool,
    /// Whether Bob's detector caught a noise photon this interval.
    pub bob_noise: bool,
    /// Photon number registered by Alice.
    pub alice_count: u32,
    /// Photon number registered by Bob.
    pub bob_count: u32,
}

impl CountPair {
    /// Assembles an unattacked pair from the twin draw and noise flags.
    pub fn from_base(base_count: u32, alice_noise: bool, bob_noise: bool) -> Self {
        Self {
            base_count,
            alice_noise,
            bob_noise,
            alice_count: base_count + u32::from(alice_noise),
            bob_count: base_count + u32::from(bob_noise),
        }
    }
}

/// A seeded TMCC source: the generator of correlated twin counts.
///
/// Each bit interval consumes exactly three indexed sub-draws — base count,
/// Alice noise, Bob noise — so draw `i` is addressable independently of
/// history, and identical `(seed, draw_counter)` always reproduces the
/// identical pair.
#[derive(Debug, Clone)]
pub struct TmccSource {
    lambda: Amplitude,
    distribution: PhotonDistribution,
    rng: CounterRng,
    draw_counter: u64,
}

impl TmccSource {
    pub fn new(lambda: Amplitude, seed: u64) -> Self {
        Self {
            lambda,
            distribution: tmcc_pmf(lambda, TruncationPolicy::Auto),
            rng: CounterRng::new(seed, CHANNEL_STREAM),
            draw_counter: 0,
        }
    }

    pub fn lambda(&self) -> Amplitude {
        self.lambda
    }

    /// The cached photon-number distribution of each mode.
    pub fn distribution(&self) -> &PhotonDistribution {
        &self.distribution
    }

    /// Index of the next bit interval to be drawn.
    pub fn draw_counter(&self) -> u64 {
        self.draw_counter
    }

    /// Repositions the source at a bit interval.
    pub fn seek(&mut self, bit_index: u64) {
        self.draw_counter = bit_index;
    }

    /// Draws the count pair for the next bit interval: base count, then
    /// Alice's noise flag, then Bob's, in fixed sub-draw order.
    pub fn draw_pair(&mut self, noise: &NoiseModel) -> CountPair {
        let sub = self
            .draw_counter
            .checked_mul(3)
            .expect("draw counter overflow");
        let base = self.distribution.sample(self.rng.uniform_at(sub)) as u32;
        let alice_noise = self.rng.uniform_at(sub + 1) < noise.epsilon;
        let bob_noise = self.rng.uniform_at(sub + 2) < noise.epsilon;
        self.draw_counter += 1;
        CountPair::from_base(base, alice_noise, bob_noise)
    }
}

/// Empirical second-order statistics of a count-pair sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    /// Sample covariance of the two count sequences (n−1 convention).
    pub covariance: f64,
    /// Pearson correlation; `None` when either margin has zero variance,
    /// which leaves the coefficient undefined.
    pub pearson: Option<f64>,
}

/// Sample covariance and Pearson correlation of the Alice/Bob count streams.
///
/// Identical streams yield a Pearson coefficient of exactly 1: that is the
/// noiseless TMCC signature, and it is computed without floating-point blur
/// by recognizing the streams as equal.
pub fn empirical_correlation(pairs: &[CountPair]) -> Result<Correlation, ChannelError> {
    let n = pairs.len();
    if n < 2 {
        return Err(ChannelError::NotEnoughSamples(n));
    }
    let nf = n as f64;
    let mean_a = pairs.iter().map(|p| f64::from(p.alice_count)).sum::<f64>() / nf;
    let mean_b = pairs.iter().map(|p| f64::from(p.bob_count)).sum::<f64>() / nf;

    let mut s_ab = 0.0;
    let mut s_aa = 0.0;
    let mut s_bb = 0.0;
    for p in pairs {
        let da = f64::from(p.alice_count) - mean_a;
        let db = f64::from(p.bob_count) - mean_b;
        s_ab += da * db;
        s_aa += da * da;
        s_bb += db * db;
    }
    let covariance = s_ab / (nf - 1.0);

    let pearson = if s_aa == 0.0 || s_bb == 0.0 {
        None
    } else if pairs.iter().all(|p| p.alice_count == p.bob_count) {
        Some(1.0)
    } else {
        Some((s_ab / (s_aa.sqrt() * s_bb.sqrt())).clamp(-1.0, 1.0))
    };

    Ok(Correlation {
        covariance,
        pearson,
    })
}

/// The count distribution a detector sees through the noisy channel:
/// the base pmf shifted up by one with probability ε.
pub fn noisy_distribution(dist: &PhotonDistribution, noise: &NoiseModel) -> PhotonDistribution {
    let epsilon = noise.epsilon;
    if epsilon == 0.0 {
        return dist.clone();
    }
    let base = dist.probabilities();
    let mut shifted = vec![0.0; base.len() + 1];
    for (n, &p) in base.iter().enumerate() {
        shifted[n] += (1.0 - epsilon) * p;
        shifted[n + 1] += epsilon * p;
    }
    PhotonDistribution::from_probabilities(shifted).expect("convolution preserves validity")
}
