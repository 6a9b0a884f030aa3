//! Simulator and analysis toolkit for quantum key distribution over
//! two-mode coherently correlated (TMCC) twin laser beams.
//!
//! A TMCC source emits photon pairs into two spatially separated modes, so
//! both receivers see the *same* shot noise. That shared noise is the random
//! key material: counts at or below the session threshold decode as bit 0,
//! above it as bit 1. The crate provides:
//!
//! - [`photon`] — exact photon-number statistics: the sub-Poissonian TMCC
//!   pmf, closed-form moments, Fock-amplitude representation, modified
//!   Bessel numerics, and inverse-CDF sampling;
//! - [`channel`] — the correlated twin-count channel with per-mode
//!   single-photon thermal noise and empirical correlation estimators;
//! - [`protocol`] — threshold bit decisions, the XOR half-code verification
//!   exchange, session orchestration, and closed-form error analysis;
//! - [`attacks`] — beam-splitting and state-cloning eavesdropper models;
//! - [`detection`] — chi-square comparison of observed count histograms
//!   against the expected distribution, which is what exposes a cloner;
//! - [`transport`] — the classical public channel: a bit-exact frame codec,
//!   an in-process loopback, and a TCP endpoint.
//!
//! The numeric core is generic over the scalar type via [`scalar::Real`];
//! the aliases below pin `f64` for the simulation stack.

pub mod attacks;
pub mod channel;
pub mod detection;
pub mod photon;
pub mod protocol;
pub mod rng;
pub mod scalar;
pub mod transport;

/// Field amplitude `|λ|` at the simulation scalar type.
pub type Amplitude = photon::Amplitude<f64>;

/// Photon-number distribution at the simulation scalar type.
pub type PhotonDistribution = photon::PhotonDistribution<f64>;

/// Truncated Fock-pair amplitudes at the simulation scalar type.
pub type FockAmplitudes = photon::FockAmplitudes<f64>;
