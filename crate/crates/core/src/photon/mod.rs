//! Photon-number statistics of the two-mode coherently correlated (TMCC)
//! state.
//!
//! A TMCC state with field amplitude `|λ|` contains only equal-photon-number
//! pairs `|n,n⟩`, with Fock coefficients proportional to `λ^n / n!` and an
//! `I0`-based normalization. Each mode separately shows the photon-number law
//!
//! ```text
//! P_n = (1 / I0(2|λ|)) · |λ|^{2n} / n!²
//! ```
//!
//! which is strongly sub-Poissonian: its variance stays below its mean, the
//! signature that separates a TMCC beam from a coherent beam of equal
//! intensity. This module provides the pmf, its closed-form moments, the
//! truncated Fock-amplitude representation, and inverse-CDF sampling.
//!
//! Everything here is generic over the scalar type; `f64` aliases live at the
//! crate root.

pub mod bessel;

use serde::Serialize;
use thiserror::Error;

pub use bessel::{bessel_i, i0, i1, BesselOrder};

use crate::scalar::{from_count, lit, Real};

/// Neglected tail mass allowed by the automatic truncation policy, relative
/// to the total. Applied to both the plain and the `n²`-weighted tail so that
/// second moments of the truncated pmf are good to well below `1e-10`.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Smallest support the automatic truncation policy ever produces.
const MIN_N_MAX: usize = 20;

/// Hard cap on the support size; unreachable for any amplitude this crate
/// is used with, present so that construction is total.
const MAX_N_MAX: usize = 1 << 16;

/// Unnormalized running sums are rescaled when they exceed this, keeping the
/// term recurrences finite for very large amplitudes at any scalar width.
/// Terms that underflow to zero under repeated rescaling are below any tail
/// tolerance anyway.
fn rescale_threshold<T: Real>() -> T {
    T::max_value().sqrt()
}

#[derive(Debug, Error)]
pub enum PhotonError {
    /// An argument was outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A requested truncation bound leaves more than the tolerated tail mass.
    #[error("truncation error: {0}")]
    Truncation(String),
}

/// Dimensionless field amplitude `|λ|` of a TMCC state.
///
/// The phase of λ drops out of every photon-number quantity, so only the
/// magnitude is stored; constructing from a negative real keeps its absolute
/// value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Amplitude<T>(T);

impl<T: Real> Amplitude<T> {
    /// Creates an amplitude from any finite real, storing `|value|`.
    pub fn new(value: T) -> Result<Self, PhotonError> {
        if !value.is_finite() {
            return Err(PhotonError::Domain(format!(
                "amplitude must be finite, got {value:?}"
            )));
        }
        Ok(Self(value.abs()))
    }

    /// The vacuum amplitude, λ = 0.
    pub fn zero() -> Self {
        Self(T::zero())
    }

    /// `|λ|`.
    pub fn magnitude(self) -> T {
        self.0
    }
}

/// Support-bound policy for constructing a [`PhotonDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruncationPolicy {
    /// Truncate at the smallest `n_max ≥ 20` where the analytic tail bound
    /// (plain and `n²`-weighted) drops below [`TAIL_TOLERANCE`] of the total,
    /// then renormalize.
    #[default]
    Auto,
    /// Truncate at exactly this index and renormalize over `0..=n_max`.
    Fixed(usize),
}

/// A truncated, renormalized photon-number distribution with cached moments
/// and CDF.
///
/// Invariants established at construction: probabilities are nonnegative and
/// sum to 1, the CDF is nondecreasing with `cdf[n_max] = 1` exactly, and the
/// cached mean and variance are the moments of the stored probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution<T> {
    probabilities: Vec<T>,
    cdf: Vec<T>,
    mean: T,
    variance: T,
}

impl<T: Real> PhotonDistribution<T> {
    /// Builds a distribution from raw nonnegative weights, renormalizing.
    pub fn from_probabilities(weights: Vec<T>) -> Result<Self, PhotonError> {
        if weights.is_empty() {
            return Err(PhotonError::Domain("empty probability vector".into()));
        }
        let mut total = T::zero();
        for (n, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < T::zero() {
                return Err(PhotonError::Domain(format!(
                    "probability at n={n} must be finite and nonnegative, got {w:?}"
                )));
            }
            total += w;
        }
        if total <= T::zero() {
            return Err(PhotonError::Domain("probabilities sum to zero".into()));
        }

        let probabilities: Vec<T> = weights.into_iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(probabilities.len());
        let mut acc = T::zero();
        for &p in &probabilities {
            acc += p;
            cdf.push(acc.min(T::one()));
        }
        *cdf.last_mut().expect("nonempty") = T::one();

        let mut mean = T::zero();
        for (n, &p) in probabilities.iter().enumerate() {
            mean += from_count::<T>(n) * p;
        }
        // Central-moment form keeps the variance nonnegative term by term.
        let mut variance = T::zero();
        for (n, &p) in probabilities.iter().enumerate() {
            let d = from_count::<T>(n) - mean;
            variance += d * d * p;
        }

        Ok(Self {
            probabilities,
            cdf,
            mean,
            variance,
        })
    }

    /// Largest photon number in the truncated support.
    pub fn n_max(&self) -> usize {
        self.probabilities.len() - 1
    }

    /// `P(N = n)`; zero beyond the truncated support.
    pub fn prob(&self, n: usize) -> T {
        self.probabilities.get(n).copied().unwrap_or_else(T::zero)
    }

    /// The normalized probabilities, indexed by photon number.
    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    /// The cumulative distribution on the same index range; the last entry
    /// is exactly 1.
    pub fn cdf(&self) -> &[T] {
        &self.cdf
    }

    /// `Σ n·P_n` of the stored probabilities.
    pub fn mean(&self) -> T {
        self.mean
    }

    /// `Σ (n − mean)²·P_n` of the stored probabilities.
    pub fn variance(&self) -> T {
        self.variance
    }

    /// Inverse-CDF sampling: the smallest `n` with `cdf[n] > u`.
    ///
    /// Deterministic given the variate `u`, which must lie in `[0, 1)`.
    pub fn sample(&self, u: T) -> usize {
        debug_assert!(u >= T::zero() && u < T::one(), "variate outside [0,1)");
        self.cdf.partition_point(|&c| c <= u).min(self.n_max())
    }
}

/// Builds the term sequence `t_0 = 1, t_{n+1} = t_n · ratio(n)` under a
/// truncation policy. `ratio` must be nonincreasing in `n`, which holds for
/// both term families used here.
fn build_terms<T: Real>(ratio: impl Fn(usize) -> T, policy: TruncationPolicy) -> Vec<T> {
    let rescale_at = rescale_threshold::<T>();
    let mut terms = vec![T::one()];
    let mut sum = T::one();

    if let TruncationPolicy::Fixed(n_max) = policy {
        let n_max = n_max.min(MAX_N_MAX);
        for n in 0..n_max {
            let t_next = terms[n] * ratio(n);
            terms.push(t_next);
            sum += t_next;
            if sum > rescale_at {
                rescale(&mut terms, &mut sum, rescale_at);
            }
        }
        return terms;
    }

    let tail_tol = lit::<T>(TAIL_TOLERANCE);
    loop {
        let n = terms.len() - 1;
        let t_next = terms[n] * ratio(n);
        if n >= MIN_N_MAX {
            let r = ratio(n + 1);
            if r < T::one() {
                // Σ_{k>n} k²·t_k ≤ t_{n+1}·(n+3)²/(1−r)³ for nonincreasing
                // ratios; the n²-weighted bound dominates the plain one.
                let one_minus_r = T::one() - r;
                let slack = tail_tol * sum * one_minus_r * one_minus_r * one_minus_r;
                let weight = from_count::<T>((n + 3) * (n + 3));
                if t_next * weight < slack {
                    break;
                }
            }
        }
        if terms.len() > MAX_N_MAX {
            break;
        }
        terms.push(t_next);
        sum += t_next;
        if sum > rescale_at {
            rescale(&mut terms, &mut sum, rescale_at);
        }
    }
    terms
}

fn rescale<T: Real>(terms: &mut [T], sum: &mut T, factor: T) {
    for t in terms.iter_mut() {
        *t = *t / factor;
    }
    *sum = *sum / factor;
}

/// Photon-number pmf of a TMCC beam: `P_n ∝ |λ|^{2n} / n!²`.
pub fn tmcc_pmf<T: Real>(lambda: Amplitude<T>, policy: TruncationPolicy) -> PhotonDistribution<T> {
    let x = lambda.magnitude();
    let x_sq = x * x;
    let terms = build_terms(
        |n| {
            let d = from_count::<T>(n + 1);
            x_sq / (d * d)
        },
        policy,
    );
    PhotonDistribution::from_probabilities(terms).expect("tmcc terms are valid weights")
}

/// Photon-number pmf of a coherent (Poisson) beam of the given mean, under
/// the same truncation policy; the comparison baseline for state
/// identification.
pub fn poisson_pmf<T: Real>(
    mean: T,
    policy: TruncationPolicy,
) -> Result<PhotonDistribution<T>, PhotonError> {
    if !mean.is_finite() || mean < T::zero() {
        return Err(PhotonError::Domain(format!(
            "poisson mean must be finite and nonnegative, got {mean:?}"
        )));
    }
    let terms = build_terms(|n| mean / from_count::<T>(n + 1), policy);
    Ok(PhotonDistribution::from_probabilities(terms).expect("poisson terms are valid weights"))
}

/// Closed-form mean photon number `⟨N⟩ = |λ| · I1(2|λ|) / I0(2|λ|)`.
pub fn mean_photons<T: Real>(lambda: Amplitude<T>) -> T {
    let x = lambda.magnitude();
    if x == T::zero() {
        return T::zero();
    }
    let two_x = x + x;
    let ratio = i1(two_x).expect("amplitude validated") / i0(two_x).expect("amplitude validated");
    x * ratio
}

/// Closed-form mean square `⟨N²⟩ = |λ|²`.
pub fn mean_square_photons<T: Real>(lambda: Amplitude<T>) -> T {
    let x = lambda.magnitude();
    x * x
}

/// Closed-form photon-number variance
/// `σ² = |λ|² (1 − (I1(2|λ|)/I0(2|λ|))²)`.
///
/// Strictly below [`mean_photons`] for every λ > 0: the sub-Poissonian
/// signature of the TMCC beam.
pub fn variance<T: Real>(lambda: Amplitude<T>) -> T {
    let x = lambda.magnitude();
    if x == T::zero() {
        return T::zero();
    }
    let two_x = x + x;
    let ratio = i1(two_x).expect("amplitude validated") / i0(two_x).expect("amplitude validated");
    x * x * (T::one() - ratio * ratio)
}

/// Inverts [`mean_photons`]: the amplitude whose TMCC beam has the given
/// mean photon number.
///
/// The mean is strictly increasing in `|λ|`, so bisection on the bracket
/// `[0, target + 2]` converges unconditionally. Targets above 350 are
/// rejected: past `|λ| ≈ 355` the Bessel ratio overflows double precision.
pub fn amplitude_for_mean<T: Real>(target: T) -> Result<Amplitude<T>, PhotonError> {
    if !target.is_finite() || target < T::zero() || target > lit::<T>(350.0) {
        return Err(PhotonError::Domain(format!(
            "target mean must lie in [0, 350], got {target:?}"
        )));
    }
    if target == T::zero() {
        return Ok(Amplitude::zero());
    }
    let mut lo = T::zero();
    let mut hi = target + lit::<T>(2.0);
    debug_assert!(mean_photons(Amplitude(hi)) > target);
    for _ in 0..200 {
        let mid = (lo + hi) / lit::<T>(2.0);
        if mid <= lo || mid >= hi {
            break; // interval collapsed to adjacent floats
        }
        if mean_photons(Amplitude(mid)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Amplitude(hi))
}

/// Truncated Fock-pair amplitudes `c_n` of a TMCC state:
/// `|λ⟩ = Σ c_n |n,n⟩` with `c_n = λ^n / (n! √I0(2λ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockAmplitudes<T> {
    coefficients: Vec<T>,
}

impl<T: Real> FockAmplitudes<T> {
    /// Amplitudes indexed by pair number `n`.
    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn n_max(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `Σ c_n²`; 1 within truncation tolerance for a state built by
    /// [`build_fock_amplitudes`].
    pub fn norm_squared(&self) -> T {
        self.coefficients.iter().fold(T::zero(), |acc, &c| acc + c * c)
    }
}

/// Builds the truncated amplitude representation, requiring the neglected
/// tail probability beyond `n_max` to stay below [`TAIL_TOLERANCE`].
pub fn build_fock_amplitudes<T: Real>(
    lambda: Amplitude<T>,
    n_max: usize,
) -> Result<FockAmplitudes<T>, PhotonError> {
    let x = lambda.magnitude();
    let c0 = (i0(x + x).expect("amplitude validated")).sqrt().recip();
    let mut coefficients = Vec::with_capacity(n_max + 1);
    let mut c = c0;
    coefficients.push(c);
    for n in 0..n_max {
        c = c * x / from_count::<T>(n + 1);
        coefficients.push(c);
    }

    // Probability tail beyond n_max, bounded geometrically.
    let c_next = c * x / from_count::<T>(n_max + 1);
    let p_next = c_next * c_next;
    let r = {
        let d = x / from_count::<T>(n_max + 2);
        d * d
    };
    let tail_ok = r < T::one() && p_next / (T::one() - r) < lit::<T>(TAIL_TOLERANCE);
    if !tail_ok {
        return Err(PhotonError::Truncation(format!(
            "n_max = {n_max} leaves more than {TAIL_TOLERANCE:e} tail probability"
        )));
    }
    Ok(FockAmplitudes { coefficients })
}

/// Applies the pair annihilator `a₁a₂` to a truncated state:
/// `out[n] = (n+1)·c_{n+1}` (each mode contributes `√(n+1)`).
///
/// The result is unnormalized. For a TMCC state it reproduces `λ·c_n` within
/// truncation tolerance for `n ≤ n_max − 2`: the state is an eigenstate of
/// the product of annihilators.
pub fn apply_pair_annihilation<T: Real>(state: &FockAmplitudes<T>) -> FockAmplitudes<T> {
    let coeffs = state.coefficients();
    let mut out = Vec::with_capacity(coeffs.len());
    for n in 0..coeffs.len() - 1 {
        out.push(from_count::<T>(n + 1) * coeffs[n + 1]);
    }
    out.push(T::zero());
    FockAmplitudes { coefficients: out }
}
