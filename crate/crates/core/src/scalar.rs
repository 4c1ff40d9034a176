//! Numeric modes shared by the exact and floating pipelines.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational used by every exact computation.
pub type Rational = BigRational;

/// A number type the OPI conversions and the simplex can run on.
///
/// `f64` is the floating mode, [`Rational`] the exact mode. Comparisons that
/// would need a tolerance go through [`Scalar::tolerance`], which is zero in
/// exact mode.
pub trait Scalar: Clone + Debug + PartialOrd + Signed + FromPrimitive + Send + Sync {
    const EXACT: bool;

    fn tolerance() -> Self;

    fn to_f64(&self) -> f64;

    fn ratio(numer: i64, denom: i64) -> Self;

    fn from_int(v: i64) -> Self {
        Self::ratio(v, 1)
    }

    /// `|self| <= tolerance`.
    fn is_negligible(&self) -> bool {
        self.abs() <= Self::tolerance()
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn tolerance() -> Self {
        1e-9
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn ratio(numer: i64, denom: i64) -> Self {
        numer as f64 / denom as f64
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn tolerance() -> Self {
        Rational::zero()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn ratio(numer: i64, denom: i64) -> Self {
        Rational::new(BigInt::from(numer), BigInt::from(denom))
    }
}

/// Shorthand for `numer/denom` as an exact rational.
pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::ratio(numer, denom)
}

/// Formats `x` with `digits` significant digits, trimming trailing zeros.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Rounds `x` to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    format_sig(x, digits).parse().unwrap_or(x)
}

/// Renders a rational as `p/q`, or `p` when the denominator is one.
pub fn format_rational(r: &Rational) -> String {
    if r.denom() == &BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
