//! Numeric back ends. Every algorithm in the crate is written once against
//! [`Scalar`] and runs either on exact rationals or on `f64` with explicit
//! tolerances.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

use crate::error::{Result, ThermoError};

pub type Rational = BigRational;

pub trait Scalar:
    Clone + fmt::Debug + fmt::Display + PartialOrd + Num + Signed + Send + Sync + 'static
{
    /// True when arithmetic is exact and tolerances are ignored.
    const EXACT: bool;

    fn from_u64(v: u64) -> Self;

    fn ratio(num: u64, den: u64) -> Self {
        Self::from_u64(num) / Self::from_u64(den)
    }

    fn to_f64(&self) -> f64;

    /// Converts a float input. Rationals take the exact binary value.
    fn from_f64(v: f64) -> Option<Self>;

    /// The slack used in comparisons: zero in exact mode.
    fn tolerance(tol: f64) -> Self;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_u64(v: u64) -> Self {
        v as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_f64(v: f64) -> Option<Self> {
        v.is_finite().then_some(v)
    }

    fn tolerance(tol: f64) -> Self {
        tol
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_u64(v: u64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_f64(v: f64) -> Option<Self> {
        Rational::from_float(v)
    }

    fn tolerance(_tol: f64) -> Self {
        Rational::zero()
    }
}

pub fn sum<S: Scalar>(xs: &[S]) -> S {
    xs.iter().fold(S::zero(), |acc, x| acc + x.clone())
}

pub fn max_abs<S: Scalar>(xs: impl IntoIterator<Item = S>) -> S {
    xs.into_iter()
        .map(|x| x.abs())
        .fold(S::zero(), |acc, x| if x > acc { x } else { acc })
}

/// `a <= b` up to the tolerance.
pub fn le_tol<S: Scalar>(a: &S, b: &S, tol: &S) -> bool {
    a.clone() <= b.clone() + tol.clone()
}

pub fn eq_tol<S: Scalar>(a: &S, b: &S, tol: &S) -> bool {
    (a.clone() - b.clone()).abs() <= *tol
}

/// Parses `"3/7"`, `"-2"`, `"0.125"` or `"1e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        return rational_from_parts(num, den);
    }
    parse_decimal(text)
}

pub fn rational_from_parts(num: &str, den: &str) -> Result<Rational> {
    let num = parse_decimal(num)?;
    let den = parse_decimal(den)?;
    if den.is_zero() {
        return Err(ThermoError::Parse("zero denominator".into()));
    }
    Ok(num / den)
}

fn parse_decimal(text: &str) -> Result<Rational> {
    let bad = || ThermoError::Parse(format!("not a number: {text:?}"));
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (
            &text[..pos],
            text[pos + 1..].parse::<i32>().map_err(|_| bad())?,
        ),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(
        BigInt::from_str_radix(if all_digits.is_empty() { "0" } else { &all_digits }, 10)
            .map_err(|_| bad())?,
    );
    let scale = exponent - frac_part.len() as i32;
    let ten = Rational::from_integer(BigInt::from(10));
    if scale >= 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else {
        value /= num_traits::pow(ten, (-scale) as usize);
    }
    Ok(if negative { -value } else { value })
}

/// Exact rational reading of a float through its shortest round-trip decimal,
/// so that `0.1` becomes `1/10` rather than its binary expansion.
pub fn rational_from_decimal_f64(v: f64) -> Result<Rational> {
    if !v.is_finite() {
        return Err(ThermoError::Parse(format!("non-finite number {v}")));
    }
    parse_decimal(&format!("{v:e}"))
}

pub fn rational_to_pair(r: &Rational) -> [String; 2] {
    [r.numer().to_string(), r.denom().to_string()]
}

pub fn rational(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_from_u64(v: u64) -> Rational {
    Rational::from_integer(BigInt::from_u64(v).expect("u64 fits in BigInt"))
}
