//! The key-distribution session.
//!
//! Both parties read the same twin-beam shot noise, decode each bit interval
//! against the session threshold `[⟨N⟩]` (counts at or below decode as 0,
//! above as 1), and then check agreement publicly: Bob XORs the two halves of
//! his code and sends the result; Alice XORs one of her halves into it and
//! compares against her other half. Any key discrepancy surfaces as a
//! mismatch without revealing the key bits themselves beyond their parity
//! relation.
//!
//! A session aborts on a verification mismatch, on a failed count
//! distribution test at either party (the eavesdropping defense), or on a
//! transport failure. The whole run is deterministic given the session seed.

use serde::{Serialize, Serializer};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::attacks::{AttackError, AttackModel, Eavesdropper};
use crate::channel::{noisy_distribution, ChannelError, CountPair, NoiseModel, TmccSource};
use crate::detection::{fit_test, DetectionError, DetectionReport};
use crate::photon::{mean_photons, tmcc_pmf, TruncationPolicy};
use crate::rng::splitmix64;
use crate::transport::{Endpoint, FramePipe, MessageBody, TransportError};
use crate::{Amplitude, PhotonDistribution};

/// Abort-message reason sent when a party's distribution test rejects.
const ABORT_DETECTION: &str = "distribution-test-rejected";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("invalid key shape: {0}")]
    KeyShape(String),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Which endpoint of the session this process plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Holds the source; receives the XOR half-code and issues the verdict.
    Alice,
    /// Sends the XOR half-code and learns the verdict.
    Bob,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Alice => write!(f, "alice"),
            Role::Bob => write!(f, "bob"),
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "alice" => Ok(Role::Alice),
            "bob" => Ok(Role::Bob),
            other => Err(format!("unknown role {other:?} (expected alice or bob)")),
        }
    }
}

/// Parameters of one key-distribution session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SessionConfig {
    /// Source amplitude |λ|; both parties know the resulting mean.
    pub lambda: Amplitude,
    /// Per-mode noise-photon probability ε.
    pub epsilon: f64,
    /// Key length; must be even so the half-code split is unambiguous.
    pub key_bits: usize,
    /// Shared quantum-source seed (the simulation stand-in for the physical
    /// twin beam).
    pub seed: u64,
    /// Significance of the distribution test; rejection aborts the session.
    pub detection_significance: f64,
    /// Eavesdropper interposed between source and Bob.
    pub attack: AttackModel,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.key_bits < 2 || !self.key_bits.is_multiple_of(2) {
            return Err(ProtocolError::InvalidConfig(format!(
                "key_bits must be even and at least 2, got {}",
                self.key_bits
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(ProtocolError::InvalidConfig(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.detection_significance > 0.0 && self.detection_significance <= 0.5) {
            return Err(ProtocolError::InvalidConfig(format!(
                "detection significance must lie in (0, 0.5], got {}",
                self.detection_significance
            )));
        }
        self.attack.validate()?;
        Ok(())
    }
}

/// The decision threshold `[⟨N⟩]`: integer part of the mean photon number.
pub fn decision_threshold(lambda: Amplitude) -> u32 {
    mean_photons(lambda).floor() as u32
}

/// Bit rule: counts at or below the threshold decode as 0, above as 1.
/// A count exactly at the threshold is a 0.
pub fn decide_bit(count: u32, threshold: u32) -> bool {
    count > threshold
}

/// Probability of decoding 0: the TMCC CDF at the decision threshold.
pub fn prob_zero(lambda: Amplitude) -> f64 {
    let dist = tmcc_pmf(lambda, TruncationPolicy::Auto);
    let threshold = decision_threshold(lambda) as usize;
    debug_assert!(threshold <= dist.n_max());
    dist.cdf()[threshold.min(dist.n_max())]
}

/// The error factor: probability that a count decoded as 0 sits exactly at
/// the threshold, conditional on decoding 0. This is the channel's
/// vulnerability to a single noise photon; it shrinks as the beam
/// intensifies, which is the protocol's self-correction property.
pub fn error_factor(lambda: Amplitude) -> f64 {
    let dist = tmcc_pmf(lambda, TruncationPolicy::Auto);
    let threshold = decision_threshold(lambda) as usize;
    debug_assert!(threshold <= dist.n_max());
    dist.prob(threshold) / dist.cdf()[threshold.min(dist.n_max())]
}

/// First-order conditional error rate: the probability that Bob reads 1
/// where Alice read 0 is ε times the error factor, to first order in ε.
pub fn error_probability(lambda: Amplitude, epsilon: f64) -> f64 {
    epsilon * error_factor(lambda)
}

/// A key split into halves with their XOR.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HalfCodes {
    pub first: Vec<bool>,
    pub second: Vec<bool>,
    pub xor: Vec<bool>,
}

/// Splits an even-length key at its midpoint and XORs the halves.
pub fn xor_half_codes(key: &[bool]) -> Result<HalfCodes, ProtocolError> {
    if key.is_empty() || !key.len().is_multiple_of(2) {
        return Err(ProtocolError::KeyShape(format!(
            "half-code split needs a nonempty even-length key, got {} bits",
            key.len()
        )));
    }
    let (first, second) = key.split_at(key.len() / 2);
    let xor = first.iter().zip(second).map(|(&a, &b)| a ^ b).collect();
    Ok(HalfCodes {
        first: first.to_vec(),
        second: second.to_vec(),
        xor,
    })
}

/// Result of Alice's comparison, with the positions (within the half-code)
/// where the reconstruction disagreed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerificationOutcome {
    Match,
    Mismatch { positions: Vec<usize> },
}

/// Decodes Bob's XOR message with Alice's first half and compares against
/// her second half. Any single-bit discrepancy in either key shows up as a
/// differing position.
pub fn verify_keys(
    alice_key: &[bool],
    bob_xor_message: &[bool],
) -> Result<VerificationOutcome, ProtocolError> {
    if alice_key.is_empty() || !alice_key.len().is_multiple_of(2) {
        return Err(ProtocolError::KeyShape(format!(
            "verification needs a nonempty even-length key, got {} bits",
            alice_key.len()
        )));
    }
    if bob_xor_message.len() != alice_key.len() / 2 {
        return Err(ProtocolError::KeyShape(format!(
            "XOR message must carry {} bits, got {}",
            alice_key.len() / 2,
            bob_xor_message.len()
        )));
    }
    let (first, second) = alice_key.split_at(alice_key.len() / 2);
    let positions: Vec<usize> = first
        .iter()
        .zip(bob_xor_message)
        .zip(second)
        .enumerate()
        .filter_map(|(i, ((&a, &x), &b))| if a ^ x != b { Some(i) } else { None })
        .collect();
    Ok(if positions.is_empty() {
        VerificationOutcome::Match
    } else {
        VerificationOutcome::Mismatch { positions }
    })
}

/// Everything recorded about one bit interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitRecord {
    pub index: u64,
    pub counts: CountPair,
    pub alice_bit: bool,
    pub bob_bit: bool,
    pub threshold: u32,
}

/// Verification result as recorded in transcripts: both parties learn the
/// differing-bit count, positions stay with Alice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum VerificationSummary {
    Match,
    Mismatch { differing: u32 },
}

/// Why a session ended without a key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbortReason {
    /// The public channel failed or misbehaved.
    Transport { detail: String },
    /// The XOR comparison found differing bits.
    Verification,
    /// A distribution test rejected at one of the parties.
    EavesdroppingSuspected,
}

impl AbortReason {
    /// Stable machine-readable label.
    pub fn label(&self) -> &'static str {
        match self {
            AbortReason::Transport { .. } => "transport",
            AbortReason::Verification => "verification",
            AbortReason::EavesdroppingSuspected => "eavesdropping-suspected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SessionOutcome {
    Accepted,
    Aborted { reason: AbortReason },
}

impl SessionOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, SessionOutcome::Accepted)
    }
}

fn serialize_bits<S: Serializer>(bits: &[bool], serializer: S) -> Result<S::Ok, S::Error> {
    serializer.serialize_str(&bits_to_string(bits))
}

/// Renders a bit sequence as a `0`/`1` string in transmission order.
pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// The full record of one session, identical at both endpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionTranscript {
    /// Hex session identifier, derived deterministically from the seed.
    pub session_id: String,
    pub config: SessionConfig,
    pub threshold: u32,
    pub records: Vec<BitRecord>,
    #[serde(serialize_with = "serialize_bits")]
    pub alice_key: Vec<bool>,
    #[serde(serialize_with = "serialize_bits")]
    pub bob_key: Vec<bool>,
    /// `None` when the session aborted before the comparison happened.
    pub verification: Option<VerificationSummary>,
    /// `None` when the session was too short for a distribution test.
    pub alice_detection: Option<DetectionReport>,
    pub bob_detection: Option<DetectionReport>,
    pub outcome: SessionOutcome,
}

/// Deterministic 128-bit session identifier for a seed.
pub fn session_id_for_seed(seed: u64) -> u128 {
    let mut state = seed;
    let hi = splitmix64(&mut state);
    let lo = splitmix64(&mut state);
    (u128::from(hi) << 64) | u128::from(lo)
}

/// Simulated measurement data both endpoints derive from the shared seed.
struct StreamSimulation {
    threshold: u32,
    records: Vec<BitRecord>,
    alice_key: Vec<bool>,
    bob_key: Vec<bool>,
    alice_detection: Option<DetectionReport>,
    bob_detection: Option<DetectionReport>,
}

/// Draws the full count stream and decides both parties' bits.
///
/// Each endpoint of a networked session recomputes this identically from the
/// shared seed — the simulation stand-in for physically receiving one mode of
/// the twin beam — but the protocol messages only ever carry the public data.
fn simulate_stream(config: &SessionConfig) -> Result<StreamSimulation, ProtocolError> {
    let threshold = decision_threshold(config.lambda);
    let noise = NoiseModel::new(config.epsilon)?;
    let mut source = TmccSource::new(config.lambda, config.seed);
    let mut eve = Eavesdropper::new(config.attack, config.seed)?;

    let mut records = Vec::with_capacity(config.key_bits);
    for index in 0..config.key_bits as u64 {
        let pair = eve.intercept(index, source.draw_pair(&noise))?;
        records.push(BitRecord {
            index,
            counts: pair,
            alice_bit: decide_bit(pair.alice_count, threshold),
            bob_bit: decide_bit(pair.bob_count, threshold),
            threshold,
        });
    }
    let alice_key: Vec<bool> = records.iter().map(|r| r.alice_bit).collect();
    let bob_key: Vec<bool> = records.iter().map(|r| r.bob_bit).collect();

    // Both parties test their own counts against the law they expect through
    // the noisy channel: the TMCC pmf convolved with the ε-noise. Sessions
    // too short (or too degenerate) for a chi-square are recorded as
    // untested rather than failed.
    let expected = noisy_distribution(&tmcc_pmf(config.lambda, TruncationPolicy::Auto), &noise);
    let detect = |counts: &[u32]| -> Result<Option<DetectionReport>, ProtocolError> {
        match fit_test(counts, &expected, config.detection_significance) {
            Ok(report) => Ok(Some(report)),
            Err(DetectionError::InsufficientData(_)) => Ok(None),
            Err(e @ DetectionError::InvalidSignificance(_)) => {
                Err(ProtocolError::Internal(e.to_string()))
            }
        }
    };
    let alice_counts: Vec<u32> = records.iter().map(|r| r.counts.alice_count).collect();
    let bob_counts: Vec<u32> = records.iter().map(|r| r.counts.bob_count).collect();
    let alice_detection = detect(&alice_counts)?;
    let bob_detection = detect(&bob_counts)?;

    Ok(StreamSimulation {
        threshold,
        records,
        alice_key,
        bob_key,
        alice_detection,
        bob_detection,
    })
}

fn detection_passed(report: &Option<DetectionReport>) -> bool {
    report.as_ref().is_none_or(|r| r.passed)
}

fn aborted_from_reason(reason: String) -> SessionOutcome {
    let reason = if reason == ABORT_DETECTION {
        AbortReason::EavesdroppingSuspected
    } else {
        AbortReason::Transport { detail: reason }
    };
    SessionOutcome::Aborted { reason }
}

/// The message choreography, from this role's perspective. Transport errors
/// bubble up and become an aborted outcome in [`run_party`].
fn exchange<P: FramePipe>(
    role: Role,
    endpoint: &mut Endpoint<P>,
    sim: &StreamSimulation,
) -> Result<(Option<VerificationSummary>, SessionOutcome), TransportError> {
    match role {
        Role::Alice => {
            endpoint.send(MessageBody::Hello)?;
            match endpoint.recv()?.body {
                MessageBody::Hello => {}
                other => {
                    return Err(TransportError::ProtocolViolation(format!(
                        "expected hello, got {other:?}"
                    )))
                }
            }
            match endpoint.recv()?.body {
                MessageBody::Abort { reason } => Ok((None, aborted_from_reason(reason))),
                MessageBody::XorHalfCode(bits) => {
                    if bits.len() != sim.alice_key.len() / 2 {
                        return Err(TransportError::ProtocolViolation(format!(
                            "XOR half-code carries {} bits, expected {}",
                            bits.len(),
                            sim.alice_key.len() / 2
                        )));
                    }
                    if !detection_passed(&sim.alice_detection) {
                        endpoint.send(MessageBody::Abort {
                            reason: ABORT_DETECTION.into(),
                        })?;
                        return Ok((
                            None,
                            SessionOutcome::Aborted {
                                reason: AbortReason::EavesdroppingSuspected,
                            },
                        ));
                    }
                    let outcome = verify_keys(&sim.alice_key, &bits)
                        .expect("config validation fixed the key shape");
                    match outcome {
                        VerificationOutcome::Match => {
                            endpoint.send(MessageBody::Verdict {
                                matched: true,
                                differing: 0,
                            })?;
                            Ok((Some(VerificationSummary::Match), SessionOutcome::Accepted))
                        }
                        VerificationOutcome::Mismatch { positions } => {
                            let differing = positions.len() as u32;
                            endpoint.send(MessageBody::Verdict {
                                matched: false,
                                differing,
                            })?;
                            Ok((
                                Some(VerificationSummary::Mismatch { differing }),
                                SessionOutcome::Aborted {
                                    reason: AbortReason::Verification,
                                },
                            ))
                        }
                    }
                }
                other => Err(TransportError::ProtocolViolation(format!(
                    "expected XOR half-code or abort, got {other:?}"
                ))),
            }
        }
        Role::Bob => {
            match endpoint.recv()?.body {
                MessageBody::Hello => {}
                other => {
                    return Err(TransportError::ProtocolViolation(format!(
                        "expected hello, got {other:?}"
                    )))
                }
            }
            endpoint.send(MessageBody::Hello)?;
            if !detection_passed(&sim.bob_detection) {
                endpoint.send(MessageBody::Abort {
                    reason: ABORT_DETECTION.into(),
                })?;
                return Ok((
                    None,
                    SessionOutcome::Aborted {
                        reason: AbortReason::EavesdroppingSuspected,
                    },
                ));
            }
            let halves =
                xor_half_codes(&sim.bob_key).expect("config validation fixed the key shape");
            endpoint.send(MessageBody::XorHalfCode(halves.xor))?;
            match endpoint.recv()?.body {
                MessageBody::Verdict { matched: true, .. } => {
                    Ok((Some(VerificationSummary::Match), SessionOutcome::Accepted))
                }
                MessageBody::Verdict {
                    matched: false,
                    differing,
                } => Ok((
                    Some(VerificationSummary::Mismatch { differing }),
                    SessionOutcome::Aborted {
                        reason: AbortReason::Verification,
                    },
                )),
                MessageBody::Abort { reason } => Ok((None, aborted_from_reason(reason))),
                other => Err(TransportError::ProtocolViolation(format!(
                    "expected verdict or abort, got {other:?}"
                ))),
            }
        }
    }
}

/// Runs one endpoint of a session over the given transport.
///
/// Transport failures abort the session rather than failing the call, so the
/// transcript always carries the full measurement record.
pub fn run_party<P: FramePipe>(
    role: Role,
    config: &SessionConfig,
    pipe: P,
) -> Result<SessionTranscript, ProtocolError> {
    config.validate()?;
    let sim = simulate_stream(config)?;
    let mut endpoint = Endpoint::new(pipe, session_id_for_seed(config.seed));

    let (verification, outcome) = match exchange(role, &mut endpoint, &sim) {
        Ok(result) => result,
        Err(e) => (
            None,
            SessionOutcome::Aborted {
                reason: AbortReason::Transport {
                    detail: e.to_string(),
                },
            },
        ),
    };

    Ok(SessionTranscript {
        session_id: format!("{:032x}", session_id_for_seed(config.seed)),
        config: *config,
        threshold: sim.threshold,
        records: sim.records,
        alice_key: sim.alice_key,
        bob_key: sim.bob_key,
        verification,
        alice_detection: sim.alice_detection,
        bob_detection: sim.bob_detection,
        outcome,
    })
}

/// Runs a complete session in-process over the loopback transport and
/// returns the (shared) transcript.
pub fn run_session(config: &SessionConfig) -> Result<SessionTranscript, ProtocolError> {
    let (alice_pipe, bob_pipe) = crate::transport::loopback_pair();
    let bob_config = *config;
    let bob = std::thread::spawn(move || run_party(Role::Bob, &bob_config, bob_pipe));
    let alice_transcript = run_party(Role::Alice, config, alice_pipe)?;
    let bob_transcript = bob
        .join()
        .map_err(|_| ProtocolError::Internal("bob endpoint panicked".into()))??;
    debug_assert_eq!(alice_transcript, bob_transcript);
    Ok(alice_transcript)
}

/// Monte-Carlo error tallies over raw channel draws (no exchange), the
/// simulation-level counterpart of the closed-form error analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorRates {
    pub bits: u64,
    pub threshold: u32,
    /// Bits where Alice decoded 0.
    pub alice_zero: u64,
    /// Bits where Alice decoded 0 and Bob decoded 1.
    pub cross_error: u64,
    /// Bits where the parties decoded differently, either direction.
    pub mismatched: u64,
    /// Mismatched bits that do *not* sit exactly at the threshold with
    /// exactly one noise photon — zero for the honest noisy channel, where
    /// that configuration is the only possible mismatch mechanism.
    pub mechanism_violations: u64,
}

impl ErrorRates {
    /// Empirical `P(Bob = 1 | Alice = 0)`; zero when the condition never
    /// occurred.
    pub fn conditional_error(&self) -> f64 {
        if self.alice_zero == 0 {
            0.0
        } else {
            self.cross_error as f64 / self.alice_zero as f64
        }
    }

    /// Empirical unconditional disagreement rate.
    pub fn mismatch_rate(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.mismatched as f64 / self.bits as f64
        }
    }
}

/// Tallies decision errors over `bits` draws of the unattacked noisy channel.
pub fn estimate_error_rates(
    lambda: Amplitude,
    epsilon: f64,
    bits: u64,
    seed: u64,
) -> Result<ErrorRates, ProtocolError> {
    let noise = NoiseModel::new(epsilon)?;
    let threshold = decision_threshold(lambda);
    let mut source = TmccSource::new(lambda, seed);

    let mut tally = ErrorRates {
        bits,
        threshold,
        alice_zero: 0,
        cross_error: 0,
        mismatched: 0,
        mechanism_violations: 0,
    };
    for _ in 0..bits {
        let pair = source.draw_pair(&noise);
        let alice_bit = decide_bit(pair.alice_count, threshold);
        let bob_bit = decide_bit(pair.bob_count, threshold);
        if !alice_bit {
            tally.alice_zero += 1;
            if bob_bit {
                tally.cross_error += 1;
            }
        }
        if alice_bit != bob_bit {
            tally.mismatched += 1;
            let at_threshold = pair.base_count == threshold;
            let one_noise = pair.alice_noise != pair.bob_noise;
            if !(at_threshold && one_noise) {
                tally.mechanism_violations += 1;
            }
        }
    }
    Ok(tally)
}

/// The expected count distribution a party tests against: the TMCC pmf seen
/// through the ε-noise.
pub fn expected_observation_distribution(lambda: Amplitude, epsilon: f64) -> PhotonDistribution {
    let noise = NoiseModel::new(epsilon).expect("validated epsilon");
    noisy_distribution(&tmcc_pmf(lambda, TruncationPolicy::Auto), &noise)
}
