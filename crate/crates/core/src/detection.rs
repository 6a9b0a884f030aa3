//! Statistical identification of the beam and eavesdropping detection.
//!
//! The protocol's defense against state cloning is distribution comparison:
//! both parties tabulate their observed photon counts and test them against
//! the expected law for the session amplitude. A cloning Eve preserves the
//! mean but not the shape — her resend law inflates the variance — so a
//! Pearson chi-square test on the count histogram exposes her.
//!
//! Bins with expected count below 5 are merged with their neighbors before
//! testing, the usual validity condition for the chi-square approximation.

use serde::Serialize;
use thiserror::Error;

use crate::photon::{poisson_pmf, tmcc_pmf, TruncationPolicy};
use crate::{Amplitude, PhotonDistribution};

/// Fewest observations the test accepts.
pub const MIN_OBSERVATIONS: usize = 50;

/// Smallest expected count a merged bin may have.
pub const MIN_EXPECTED_PER_BIN: f64 = 5.0;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("significance must lie in (0, 0.5], got {0}")]
    InvalidSignificance(f64),
}

/// One merged histogram cell: the count range `[lower, upper]` (upper `None`
/// means unbounded), the tally observed there, and the expected tally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountBin {
    pub lower: u32,
    pub upper: Option<u32>,
    pub observed: u64,
    pub expected: f64,
}

/// Outcome of a chi-square comparison between observed counts and an
/// expected distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub significance: f64,
    /// `true` iff `p_value ≥ significance`.
    pub passed: bool,
    pub bins: Vec<CountBin>,
}

/// Survival function of the chi-square distribution,
/// `Q(dof/2, x/2)` in terms of the regularized upper incomplete gamma.
pub fn chi_square_survival(statistic: f64, degrees_of_freedom: usize) -> f64 {
    assert!(degrees_of_freedom >= 1, "chi-square needs dof ≥ 1");
    if statistic <= 0.0 {
        return 1.0;
    }
    statrs::function::gamma::gamma_ur(degrees_of_freedom as f64 / 2.0, statistic / 2.0)
}

/// Merged bins for a sample of size `n` against `expected`, depending only on
/// the expected distribution so the binning is fixed under the null.
fn merged_bins(expected: &PhotonDistribution, n: usize) -> Vec<CountBin> {
    let n_max = expected.n_max();
    let nf = n as f64;
    // Cell j < n_max covers exactly {j}; the final cell covers [n_max, ∞).
    let cell_expected = |j: usize| -> f64 {
        if j < n_max {
            nf * expected.prob(j)
        } else {
            let below = if n_max == 0 { 0.0 } else { expected.cdf()[n_max - 1] };
            nf * (1.0 - below)
        }
    };

    let mut bins: Vec<CountBin> = Vec::new();
    let mut lower = 0u32;
    let mut acc = 0.0;
    for j in 0..=n_max {
        acc += cell_expected(j);
        let last_cell = j == n_max;
        if acc >= MIN_EXPECTED_PER_BIN || last_cell {
            let upper = if last_cell { None } else { Some(j as u32) };
            bins.push(CountBin {
                lower,
                upper,
                observed: 0,
                expected: acc,
            });
            lower = j as u32 + 1;
            acc = 0.0;
        }
    }
    // An undersized trailing bin folds into its neighbor.
    if bins.len() >= 2 && bins.last().expect("nonempty").expected < MIN_EXPECTED_PER_BIN {
        let tail = bins.pop().expect("nonempty");
        let prev = bins.last_mut().expect("nonempty");
        prev.upper = None;
        prev.expected += tail.expected;
    }
    bins
}

/// Pearson chi-square test of observed photon counts against an expected
/// distribution.
///
/// Adjacent cells are merged until every expected bin count reaches 5; the
/// p-value comes from [`chi_square_survival`] with `bins − 1` degrees of
/// freedom. Needs at least [`MIN_OBSERVATIONS`] observations and at least two
/// merged bins.
pub fn fit_test(
    observed: &[u32],
    expected: &PhotonDistribution,
    significance: f64,
) -> Result<DetectionReport, DetectionError> {
    if !(significance > 0.0 && significance <= 0.5) {
        return Err(DetectionError::InvalidSignificance(significance));
    }
    if observed.len() < MIN_OBSERVATIONS {
        return Err(DetectionError::InsufficientData(format!(
            "need at least {MIN_OBSERVATIONS} observations, got {}",
            observed.len()
        )));
    }

    let mut bins = merged_bins(expected, observed.len());
    if bins.len() < 2 {
        return Err(DetectionError::InsufficientData(format!(
            "only {} bin(s) have expected count ≥ {MIN_EXPECTED_PER_BIN}; \
             the expected distribution is too concentrated for a chi-square test",
            bins.len()
        )));
    }

    for &value in observed {
        let idx = bins
            .partition_point(|b| b.upper.is_some_and(|u| u < value))
            .min(bins.len() - 1);
        bins[idx].observed += 1;
    }

    let statistic: f64 = bins
        .iter()
        .map(|b| {
            let d = b.observed as f64 - b.expected;
            d * d / b.expected
        })
        .sum();
    let degrees_of_freedom = bins.len() - 1;
    let p_value = chi_square_survival(statistic, degrees_of_freedom);

    Ok(DetectionReport {
        statistic,
        degrees_of_freedom,
        p_value,
        significance,
        passed: p_value >= significance,
        bins,
    })
}

/// Side-by-side fit of the same counts against the TMCC law and the
/// mean-matched Poisson (coherent-beam) law, plus the sample moment pair for
/// the dispersion-curve comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationReport {
    pub tmcc: DetectionReport,
    pub poisson: DetectionReport,
    pub sample_mean: f64,
    pub sample_variance: f64,
}

/// Tests observed counts against the TMCC hypothesis at `lambda` and against
/// a Poisson beam of the same mean. A genuine TMCC sample passes the first
/// test and fails the second; its sample variance sits below its sample mean.
pub fn identify_state(
    observed: &[u32],
    lambda: Amplitude,
    significance: f64,
) -> Result<IdentificationReport, DetectionError> {
    let tmcc_dist = tmcc_pmf(lambda, TruncationPolicy::Auto);
    let poisson_dist = poisson_pmf(tmcc_dist.mean(), TruncationPolicy::Auto)
        .expect("pmf mean is finite and nonnegative");

    let tmcc = fit_test(observed, &tmcc_dist, significance)?;
    let poisson = fit_test(observed, &poisson_dist, significance)?;

    let n = observed.len() as f64;
    let sample_mean = observed.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let sample_variance = observed
        .iter()
        .map(|&v| (f64::from(v) - sample_mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);

    Ok(IdentificationReport {
        tmcc,
        poisson,
        sample_mean,
        sample_variance,
    })
}
