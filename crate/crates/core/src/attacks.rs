//! Eavesdropper models interposed between the source and Bob.
//!
//! Both attacks act per bit, independently, on the pre-noise twin count;
//! Bob's detector-local noise photon is re-applied afterwards. Alice's mode
//! never passes through Eve.
//!
//! - Beam splitting diverts each photon to Eve with probability `1 − t`
//!   (binomial thinning). It shifts Bob's mean and breaks the twin
//!   correlation, so verification collapses.
//! - State cloning measures Bob's count and re-emits a fresh beam whose
//!   *mean* matches the measurement. The mean is preserved — the attack is
//!   mean-stealthy — but the resend law's own spread inflates Bob's count
//!   variance, which is exactly what distribution comparison detects.
//!
//! Eve's randomness comes from her own counter-addressed stream, so enabling
//! an attack never perturbs the channel's draws.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::channel::CountPair;
use crate::photon::{amplitude_for_mean, poisson_pmf, tmcc_pmf, PhotonError, TruncationPolicy};
use crate::rng::{CounterRng, ATTACK_STREAM};
use crate::PhotonDistribution;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("beam-split transmittance must lie strictly inside (0, 1), got {0}")]
    InvalidTransmittance(f64),
    #[error("resend law construction failed: {0}")]
    Resend(#[from] PhotonError),
    #[error("unknown attack spec {0:?} (expected none, beam-split:<t>, clone:poisson, clone:tmcc)")]
    UnknownSpec(String),
}

/// Law from which a cloning Eve re-emits counts with mean equal to her
/// measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResendLaw {
    /// Fresh Poisson (coherent-beam) counts.
    Poisson,
    /// A TMCC beam whose amplitude is tuned so its mean matches the
    /// measurement.
    TmccMeanMatched,
}

/// Eavesdropper behavior applied between source and Bob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackModel {
    None,
    BeamSplit { transmittance: f64 },
    Clone { resend_law: ResendLaw },
}

impl AttackModel {
    /// Transmittance 1 means no attack and 0 a total blockade, so both ends
    /// are excluded.
    pub fn validate(&self) -> Result<(), AttackError> {
        if let AttackModel::BeamSplit { transmittance } = self {
            if !transmittance.is_finite() || *transmittance <= 0.0 || *transmittance >= 1.0 {
                return Err(AttackError::InvalidTransmittance(*transmittance));
            }
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        matches!(self, AttackModel::None)
    }
}

impl fmt::Display for AttackModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackModel::None => write!(f, "none"),
            AttackModel::BeamSplit { transmittance } => write!(f, "beam-split:{transmittance}"),
            AttackModel::Clone {
                resend_law: ResendLaw::Poisson,
            } => write!(f, "clone:poisson"),
            AttackModel::Clone {
                resend_law: ResendLaw::TmccMeanMatched,
            } => write!(f, "clone:tmcc"),
        }
    }
}

impl FromStr for AttackModel {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, AttackError> {
        let model = match s {
            "none" => AttackModel::None,
            "clone:poisson" => AttackModel::Clone {
                resend_law: ResendLaw::Poisson,
            },
            "clone:tmcc" => AttackModel::Clone {
                resend_law: ResendLaw::TmccMeanMatched,
            },
            _ => {
                let t = s
                    .strip_prefix("beam-split:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| AttackError::UnknownSpec(s.to_string()))?;
                AttackModel::BeamSplit { transmittance: t }
            }
        };
        model.validate()?;
        Ok(model)
    }
}

/// Memoized resend distributions, keyed by law and observed count. The
/// mean-matched law needs a root-find plus a pmf build per distinct count, so
/// the cache is what keeps long cloned sessions cheap.
#[derive(Debug, Default)]
pub struct ResendCache {
    distributions: HashMap<(ResendLaw, u32), PhotonDistribution>,
}

impl ResendCache {
    /// The law's count distribution with mean equal to `observed`.
    pub fn distribution(
        &mut self,
        law: ResendLaw,
        observed: u32,
    ) -> Result<&PhotonDistribution, AttackError> {
        use std::collections::hash_map::Entry;
        match self.distributions.entry((law, observed)) {
            Entry::Occupied(e) => Ok(e.into_mut()),
            Entry::Vacant(e) => {
                let dist = match law {
                    ResendLaw::Poisson => {
                        poisson_pmf(f64::from(observed), TruncationPolicy::Auto)?
                    }
                    ResendLaw::TmccMeanMatched => {
                        let lambda = amplitude_for_mean(f64::from(observed))?;
                        tmcc_pmf(lambda, TruncationPolicy::Auto)
                    }
                };
                Ok(e.insert(dist))
            }
        }
    }
}

/// Inverse-CDF Binomial(n, p) sample from a single uniform variate.
///
/// For p > 1/2 the complement is sampled instead, keeping the leading pmf
/// term away from underflow for the count scales that occur here.
fn binomial_inverse(n: u32, p: f64, u: f64) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if p > 0.5 {
        return n - binomial_inverse(n, 1.0 - p, u);
    }
    let ratio = p / (1.0 - p);
    let mut pk = (1.0 - p).powi(n as i32);
    let mut cum = pk;
    let mut k = 0u32;
    while u >= cum && k < n {
        pk *= ratio * f64::from(n - k) / f64::from(k + 1);
        k += 1;
        cum += pk;
    }
    k
}

/// Beam-splitting attack on one bit interval: Bob's base count is thinned to
/// `Binomial(base_count, transmittance)` and Eve receives the complement.
/// Alice's count and Bob's recorded noise flag are untouched.
///
/// Returns the pair Bob observes and Eve's diverted count.
pub fn apply_beam_split(pair: &CountPair, transmittance: f64, u: f64) -> (CountPair, u32) {
    let kept = binomial_inverse(pair.base_count, transmittance, u);
    let eve_count = pair.base_count - kept;
    let bob_pair = CountPair {
        bob_count: kept + u32::from(pair.bob_noise),
        ..*pair
    };
    (bob_pair, eve_count)
}

/// State-cloning attack on one bit interval: Eve observes Bob's pre-noise
/// count `m` and re-emits a fresh count drawn from the resend law with mean
/// `m` (an observation of 0 re-emits vacuum). Alice's count is untouched.
pub fn apply_clone(
    pair: &CountPair,
    law: ResendLaw,
    u: f64,
    cache: &mut ResendCache,
) -> Result<CountPair, AttackError> {
    let resent = if pair.base_count == 0 {
        0
    } else {
        cache.distribution(law, pair.base_count)?.sample(u) as u32
    };
    Ok(CountPair {
        bob_count: resent + u32::from(pair.bob_noise),
        ..*pair
    })
}

/// A configured eavesdropper with her own randomness stream, applied to the
/// channel output bit by bit.
#[derive(Debug)]
pub struct Eavesdropper {
    model: AttackModel,
    rng: CounterRng,
    cache: ResendCache,
}

impl Eavesdropper {
    pub fn new(model: AttackModel, seed: u64) -> Result<Self, AttackError> {
        model.validate()?;
        Ok(Self {
            model,
            rng: CounterRng::new(seed, ATTACK_STREAM),
            cache: ResendCache::default(),
        })
    }

    pub fn model(&self) -> AttackModel {
        self.model
    }

    /// Applies the attack to the pair for `bit_index`. The no-attack model
    /// consumes no randomness and returns the pair unchanged.
    pub fn intercept(&mut self, bit_index: u64, pair: CountPair) -> Result<CountPair, AttackError> {
        match self.model {
            AttackModel::None => Ok(pair),
            AttackModel::BeamSplit { transmittance } => {
                let u = self.rng.uniform_at(bit_index);
                Ok(apply_beam_split(&pair, transmittance, u).0)
            }
            AttackModel::Clone { resend_law } => {
                let u = self.rng.uniform_at(bit_index);
                apply_clone(&pair, resend_law, u, &mut self.cache)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{empirical_correlation, NoiseModel, TmccSource};
    use crate::photon::{mean_photons, variance};
    use crate::Amplitude;

    fn amp(x: f64) -> Amplitude {
        Amplitude::new(x).unwrap()
    }

    fn attacked_pairs(model: AttackModel, lambda: f64, n: usize, seed: u64) -> Vec<CountPair> {
        let mut source = TmccSource::new(amp(lambda), seed);
        let mut eve = Eavesdropper::new(model, seed).unwrap();
        let noise = NoiseModel::none();
        (0..n)
            .map(|i| {
                let pair = source.draw_pair(&noise);
                eve.intercept(i as u64, pair).unwrap()
            })
            .collect()
    }

    fn mean_and_var(counts: impl Iterator<Item = u32>) -> (f64, f64, usize) {
        let values: Vec<f64> = counts.map(f64::from).collect();
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        (mean, var, n)
    }

    #[test]
    fn validation() {
        assert!(AttackModel::BeamSplit { transmittance: 0.5 }.validate().is_ok());
        for t in [0.0, 1.0, -0.2, 1.4, f64::NAN] {
            assert!(AttackModel::BeamSplit { transmittance: t }.validate().is_err());
        }
    }

    #[test]
    fn spec_round_trip() {
        for s in ["none", "beam-split:0.5", "clone:poisson", "clone:tmcc"] {
            let model: AttackModel = s.parse().unwrap();
            assert_eq!(model.to_string(), s);
        }
        assert!("beam-split:1".parse::<AttackModel>().is_err());
        assert!("clone:thermal".parse::<AttackModel>().is_err());
    }

    #[test]
    fn no_attack_is_identity() {
        let mut source = TmccSource::new(amp(2.0), 8);
        let mut replay = TmccSource::new(amp(2.0), 8);
        let mut eve = Eavesdropper::new(AttackModel::None, 8).unwrap();
        let noise = NoiseModel::new(0.1).unwrap();
        for i in 0..500 {
            let pair = source.draw_pair(&noise);
            assert_eq!(eve.intercept(i, pair).unwrap(), replay.draw_pair(&noise));
        }
    }

    #[test]
    fn beam_split_zero_base() {
        let pair = CountPair::from_base(0, false, false);
        let (bob, eve) = apply_beam_split(&pair, 0.5, 0.3);
        assert_eq!(bob.bob_count, 0);
        assert_eq!(eve, 0);
    }

    #[test]
    fn beam_split_full_transmittance_limit() {
        let mut source = TmccSource::new(amp(3.0), 4);
        let noise = NoiseModel::none();
        for _ in 0..2_000 {
            let pair = source.draw_pair(&noise);
            let (bob, eve) = apply_beam_split(&pair, 1.0 - 1e-12, 0.5);
            assert_eq!(bob.bob_count, pair.bob_count);
            assert_eq!(eve, 0);
        }
    }

    #[test]
    fn beam_split_shifts_mean_and_conserves_photons() {
        let t = 0.5;
        let mut source = TmccSource::new(amp(2.0), 21);
        let mut eve_rng = CounterRng::new(21, ATTACK_STREAM);
        let noise = NoiseModel::none();
        let n = 20_000;
        let mut bob_counts = Vec::with_capacity(n);
        for i in 0..n {
            let pair = source.draw_pair(&noise);
            let (bob, eve) = apply_beam_split(&pair, t, eve_rng.uniform_at(i as u64));
            assert_eq!(bob.bob_count + eve, pair.base_count);
            bob_counts.push(bob.bob_count);
        }
        let (mean, var, _) = mean_and_var(bob_counts.into_iter());
        let expected = t * mean_photons(amp(2.0));
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - expected).abs() < 5.0 * se,
            "thinned mean {mean}, expected {expected}"
        );
    }

    #[test]
    fn beam_split_breaks_correlation() {
        let pairs = attacked_pairs(AttackModel::BeamSplit { transmittance: 0.5 }, 2.0, 10_000, 9);
        let rho = empirical_correlation(&pairs).unwrap().pearson.unwrap();
        // Observed ≈ 0.71 (≈ √t); the point is that it is far from 1.
        assert!(rho < 0.9, "rho = {rho}");
    }

    #[test]
    fn clone_zero_base_reemits_vacuum() {
        let mut cache = ResendCache::default();
        let pair = CountPair::from_base(0, false, false);
        for law in [ResendLaw::Poisson, ResendLaw::TmccMeanMatched] {
            let out = apply_clone(&pair, law, 0.9, &mut cache).unwrap();
            assert_eq!(out.bob_count, 0);
        }
    }

    #[test]
    fn clone_is_mean_stealthy_but_inflates_variance() {
        let lambda = 2.0;
        let null_mean = mean_photons(amp(lambda));
        let null_var = variance(amp(lambda));
        for law in [ResendLaw::Poisson, ResendLaw::TmccMeanMatched] {
            let pairs = attacked_pairs(AttackModel::Clone { resend_law: law }, lambda, 20_000, 33);
            let (mean, var, n) = mean_and_var(pairs.iter().map(|p| p.bob_count));
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - null_mean).abs() < 5.0 * se,
                "{law:?}: attacked mean {mean} vs null {null_mean}"
            );
            // Law of total variance: Var = E[Var(resend|m)] + Var(m) > Var(m).
            assert!(
                var > null_var + 0.5,
                "{law:?}: attacked variance {var} vs null {null_var}"
            );
        }
    }

    #[test]
    fn poisson_clone_variance_matches_total_variance_law() {
        // Var = E[m] + Var(m) for the Poisson resend law.
        let lambda = 2.0;
        let predicted = mean_photons(amp(lambda)) + variance(amp(lambda));
        let pairs = attacked_pairs(
            AttackModel::Clone {
                resend_law: ResendLaw::Poisson,
            },
            lambda,
            200_000,
            101,
        );
        let (_, var, n) = mean_and_var(pairs.iter().map(|p| p.bob_count));
        // se of a sample variance ≈ var·√(2/(n−1)) for near-normal counts;
        // use a generous 10% band instead of distribution-specific algebra.
        let _ = n;
        assert!(
            (var - predicted).abs() / predicted < 0.1,
            "attacked variance {var}, law-of-total-variance prediction {predicted}"
        );
    }

    #[test]
    fn resend_cache_means_match_observation() {
        let mut cache = ResendCache::default();
        for m in [1u32, 2, 5, 17] {
            for law in [ResendLaw::Poisson, ResendLaw::TmccMeanMatched] {
                let dist = cache.distribution(law, m).unwrap();
                assert!(
                    (dist.mean() - f64::from(m)).abs() < 1e-9,
                    "{law:?} resend mean {} for m={m}",
                    dist.mean()
                );
            }
        }
    }

    #[test]
    fn binomial_inverse_basics() {
        assert_eq!(binomial_inverse(10, 0.5, 0.0), 0);
        assert_eq!(binomial_inverse(0, 0.5, 0.7), 0);
        assert_eq!(binomial_inverse(7, 0.0, 0.9), 0);
        assert_eq!(binomial_inverse(7, 1.0, 0.1), 7);

        for (n, p) in [(10u32, 0.3), (10, 0.7), (40, 0.5)] {
            let mut rng = CounterRng::new(55, ATTACK_STREAM);
            let draws = 100_000;
            let mean = (0..draws)
                .map(|_| f64::from(binomial_inverse(n, p, rng.next_uniform())))
                .sum::<f64>()
                / draws as f64;
            let se = (f64::from(n) * p * (1.0 - p) / draws as f64).sqrt();
            assert!(
                (mean - f64::from(n) * p).abs() < 5.0 * se,
                "Binomial({n},{p}) empirical mean {mean}"
            );
        }
    }
}
