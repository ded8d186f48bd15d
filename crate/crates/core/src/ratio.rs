//! Exact rational arithmetic for time and utilization.
//!
//! All time instants, durations, utilizations and service fractions are
//! [`BigRational`]. EDF ordering and the budget equalities used by the
//! mode-switch logic must be decidable exactly, which rules out floats.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// A time instant or duration.
pub type Time = BigRational;

/// A unitless exact fraction (utilization, service level, deadline factor).
pub type Frac = BigRational;

/// Builds `num / den`. Panics if `den == 0`.
pub fn q(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Builds an integer-valued rational.
pub fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn zero() -> BigRational {
    BigRational::zero()
}

pub fn one() -> BigRational {
    BigRational::one()
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Huge numerators/denominators: scale down through the ratio of bit lengths.
        let n = r.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = r.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

/// Clamps `r` into `[lo, hi]`.
pub fn clamp(r: BigRational, lo: &BigRational, hi: &BigRational) -> BigRational {
    if &r < lo {
        lo.clone()
    } else if &r > hi {
        hi.clone()
    } else {
        r
    }
}

/// Exact conversion of a finite `f64` to a rational.
pub fn from_f64(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

/// Approximates `x` by the nearest rational with the given denominator.
pub fn from_f64_on_grid(x: f64, den: i64) -> BigRational {
    q((x * den as f64).round() as i64, den)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal `{0}`")]
pub struct ParseRationalError(pub String);

/// Parses `p/q`, an integer, or a finite decimal such as `0.125` or `-3.5`.
///
/// Decimals are converted exactly (`0.1` is `1/10`, not the nearest double).
pub fn parse(s: &str) -> Result<BigRational, ParseRationalError> {
    let err = || ParseRationalError(s.to_string());
    let s = s.trim();
    if s.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| err())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.starts_with('-');
        let whole_digits = whole.trim_start_matches(['-', '+']);
        if frac.is_empty() && whole_digits.is_empty() {
            return Err(err());
        }
        if !whole_digits.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
        {
            return Err(err());
        }
        let digits = format!("{whole_digits}{frac}");
        let n =
            BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).map_err(|_| err())?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let r = BigRational::new(n, d);
        return Ok(if negative { -r } else { r });
    }
    BigInt::from_str(s)
        .map(BigRational::from_integer)
        .map_err(|_| err())
}

/// Display wrapper writing integers bare and everything else as `p/q`.
pub struct Exact<'a>(pub &'a BigRational);

impl fmt::Display for Exact<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

pub fn format(r: &BigRational) -> String {
    Exact(r).to_string()
}

pub fn is_fraction(r: &BigRational) -> bool {
    !r.is_negative() && r <= &one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_literal_forms() {
        assert_eq!(parse("3/4").unwrap(), q(3, 4));
        assert_eq!(parse("6/8").unwrap(), q(3, 4));
        assert_eq!(parse("12").unwrap(), int(12));
        assert_eq!(parse("0.1").unwrap(), q(1, 10));
        assert_eq!(parse("-2.50").unwrap(), q(-5, 2));
        assert_eq!(parse(".5").unwrap(), q(1, 2));
        assert_eq!(parse("7.").unwrap(), int(7));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "1/0", "abc", "1.2.3", "1/x", ".", "1e3"] {
            assert!(parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn formats_exactly() {
        assert_eq!(format(&q(6, 8)), "3/4");
        assert_eq!(format(&int(-3)), "-3");
    }

    #[test]
    fn f64_conversion() {
        assert_eq!(to_f64(&q(1, 4)), 0.25);
        assert_eq!(from_f64_on_grid(0.1234, 1000), q(123, 1000));
    }
}
