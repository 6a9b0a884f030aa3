//! Modified Bessel functions of the first kind, orders 0 and 1.
//!
//! Evaluated by direct power-series accumulation. The arguments that occur in
//! this crate stay small (2|λ| for amplitudes of a few tens), where the series
//! is short and stable in double precision, so no asymptotic branch is needed.

use crate::scalar::{lit, Real};

use super::PhotonError;

/// Relative size at which a series term stops contributing.
const SERIES_TOL: f64 = 1e-16;

/// Order of the modified Bessel function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesselOrder {
    Zero,
    One,
}

impl BesselOrder {
    fn index(self) -> usize {
        match self {
            BesselOrder::Zero => 0,
            BesselOrder::One => 1,
        }
    }
}

/// Modified Bessel function `I_order(argument)` for `order ∈ {0, 1}`.
///
/// Accumulates `Σ_{m≥0} (x/2)^{2m+order} / (m! (m+order)!)` until the next
/// term falls below `1e-16` of the running sum. Rejects negative or
/// non-finite arguments.
pub fn bessel_i<T: Real>(order: BesselOrder, argument: T) -> Result<T, PhotonError> {
    if !argument.is_finite() || argument < T::zero() {
        return Err(PhotonError::Domain(format!(
            "bessel_i argument must be finite and nonnegative, got {argument:?}"
        )));
    }
    let half = argument / lit::<T>(2.0);
    let half_sq = half * half;
    let ord = order.index();

    // m = 0 term: 1 for order 0, x/2 for order 1.
    let mut term = match order {
        BesselOrder::Zero => T::one(),
        BesselOrder::One => half,
    };
    let mut sum = term;
    let tol = lit::<T>(SERIES_TOL);
    let mut m = 0usize;
    loop {
        term = term * half_sq / (lit::<T>((m + 1) as f64) * lit::<T>((m + 1 + ord) as f64));
        sum += term;
        m += 1;
        // `<=` so an exactly-zero term (argument 0) terminates immediately.
        if term <= tol * sum || m > 100_000 {
            break;
        }
    }
    Ok(sum)
}

/// `I_0(x)`.
pub fn i0<T: Real>(argument: T) -> Result<T, PhotonError> {
    bessel_i(BesselOrder::Zero, argument)
}

/// `I_1(x)`.
pub fn i1<T: Real>(argument: T) -> Result<T, PhotonError> {
    bessel_i(BesselOrder::One, argument)
}
