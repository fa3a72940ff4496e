//! Numeric abstractions shared by the builder and the solvers.
//!
//! Transition probabilities are parameterised by [`Probability`], which is
//! implemented for `f32`, `f64` and exact [`Rational`]s. The iterative
//! solvers additionally need floating point behaviour and are bounded by
//! [`Scalar`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_bigint::BigInt;
use num_traits::{Float, FromPrimitive, One, ToPrimitive, Zero};

/// Arbitrary precision rational used for probabilities in model sources.
pub type Rational = num_rational::BigRational;

/// A value that can label a transition of an explicit state space.
pub trait Probability:
    Clone + PartialEq + Debug + Send + Sync + Zero + One + std::ops::Mul<Output = Self> + 'static
{
    /// Tolerance accepted when checking that a row is stochastic.
    const ROW_TOLERANCE: f64;

    fn from_rational(r: &Rational) -> Self;

    fn as_f64(&self) -> f64;

    /// `self / n`, used when averaging interval corners.
    fn div_count(&self, n: usize) -> Self;

    /// Sums a row. Floating point implementations compensate rounding error.
    fn row_sum<'a, I>(probs: I) -> Self
    where
        I: IntoIterator<Item = &'a Self>,
        Self: 'a;

    /// Text form used in dumps: shortest round-trip decimal for floats,
    /// `p/q` for non-terminating rationals.
    fn render(&self) -> String;

    fn is_positive(&self) -> bool {
        self.as_f64() > 0.0
    }

    fn is_stochastic(sum: &Self) -> bool {
        (sum.as_f64() - 1.0).abs() <= Self::ROW_TOLERANCE
    }
}

/// Floating point scalar used by the iterative solvers.
pub trait Scalar: Probability + Float + FromPrimitive + Sum + Display {
    /// Compensated dot product of `probs` with `values[targets]`.
    fn dot(targets: &[u32], probs: &[Self], values: &[Self]) -> Self {
        let mut sum = Self::zero();
        let mut carry = Self::zero();
        for (&t, &p) in targets.iter().zip(probs) {
            let y = p * values[t as usize] - carry;
            let next = sum + y;
            carry = (next - sum) - y;
            sum = next;
        }
        sum
    }
}

/// Kahan-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum<S> {
    sum: S,
    carry: S,
}

impl<S: Float> KahanSum<S> {
    pub fn new() -> Self {
        Self {
            sum: S::zero(),
            carry: S::zero(),
        }
    }

    pub fn add(&mut self, x: S) {
        let y = x - self.carry;
        let next = self.sum + y;
        self.carry = (next - self.sum) - y;
        self.sum = next;
    }

    pub fn value(&self) -> S {
        self.sum
    }
}

macro_rules! float_probability {
    ($t:ty, $tol:expr) => {
        impl Probability for $t {
            const ROW_TOLERANCE: f64 = $tol;

            fn from_rational(r: &Rational) -> Self {
                num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN) as $t
            }

            fn as_f64(&self) -> f64 {
                *self as f64
            }

            fn div_count(&self, n: usize) -> Self {
                *self / n as $t
            }

            fn render(&self) -> String {
                format!("{self}")
            }

            fn row_sum<'a, I>(probs: I) -> Self
            where
                I: IntoIterator<Item = &'a Self>,
            {
                let mut acc = KahanSum::new();
                for &p in probs {
                    acc.add(p);
                }
                acc.value()
            }
        }

        impl Scalar for $t {}
    };
}

float_probability!(f64, 1e-9);
float_probability!(f32, 1e-5);

impl Probability for Rational {
    const ROW_TOLERANCE: f64 = 0.0;

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn div_count(&self, n: usize) -> Self {
        self / Rational::from_integer(BigInt::from(n))
    }

    fn render(&self) -> String {
        format_probability(self)
    }

    fn row_sum<'a, I>(probs: I) -> Self
    where
        I: IntoIterator<Item = &'a Self>,
    {
        probs.into_iter().fold(Rational::zero(), |acc, p| acc + p)
    }

    fn is_positive(&self) -> bool {
        self > &Rational::zero()
    }

    fn is_stochastic(sum: &Self) -> bool {
        sum.is_one()
    }
}

/// Parses a decimal (`0.25`, `3`) or fraction (`1/3`) literal exactly.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num = parse_rational(num)?;
        let den = parse_rational(den)?;
        if den.is_zero() {
            return None;
        }
        return Some(num / den);
    }
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let mantissa: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
    let value = Rational::new(mantissa, scale);
    Some(if negative { -value } else { value })
}

/// Formats a rational as a terminating decimal, or `None` if it has none.
pub fn format_decimal(r: &Rational) -> Option<String> {
    let mut den = r.denom().clone();
    let (mut twos, mut fives) = (0u32, 0u32);
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&den % &two).is_zero() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return None;
    }
    let places = twos.max(fives);
    let scaled = r * Rational::from_integer(BigInt::from(10).pow(places));
    debug_assert!(scaled.is_integer());
    let digits = scaled.to_integer();
    let negative = digits < BigInt::zero();
    let mut s = digits.magnitude().to_string();
    if places > 0 {
        let places = places as usize;
        if s.len() <= places {
            s = format!("{}{}", "0".repeat(places + 1 - s.len()), s);
        }
        s.insert(s.len() - places, '.');
    }
    Some(if negative { format!("-{s}") } else { s })
}

/// Formats a probability literal: a decimal when one exists, else `p/q`.
pub fn format_probability(r: &Rational) -> String {
    format_decimal(r).unwrap_or_else(|| format!("{}/{}", r.numer(), r.denom()))
}

/// Exact rational for an `f64` given in decimal notation (uses the shortest
/// round-trip representation, so `0.1` becomes `1/10`).
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    let repr = format!("{x:?}");
    if repr.contains('e') || repr.contains('E') {
        return Rational::from_float(x);
    }
    parse_rational(&repr)
}

/// Formats `x` with ten significant digits.
pub fn format_sig10(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (9 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn parses_decimals_and_fractions() {
        assert_eq!(parse_rational("0.25"), Some(q(1, 4)));
        assert_eq!(parse_rational("1/3"), Some(q(1, 3)));
        assert_eq!(parse_rational("3"), Some(q(3, 1)));
        assert_eq!(parse_rational("-0.5"), Some(q(-1, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("."), None);
        assert_eq!(parse_rational("1e3"), None);
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(format_decimal(&q(1, 4)).as_deref(), Some("0.25"));
        assert_eq!(format_decimal(&q(3, 1)).as_deref(), Some("3"));
        assert_eq!(format_decimal(&q(1, 1000)).as_deref(), Some("0.001"));
        assert_eq!(format_decimal(&q(-3, 20)).as_deref(), Some("-0.15"));
        assert_eq!(format_decimal(&q(1, 3)), None);
        assert_eq!(format_probability(&q(1, 3)), "1/3");
    }

    #[test]
    fn f64_conversion_is_decimal_exact() {
        assert_eq!(rational_from_f64(0.1), Some(q(1, 10)));
        assert_eq!(rational_from_f64(0.001), Some(q(1, 1000)));
        assert_eq!(rational_from_f64(f64::NAN), None);
    }

    #[test]
    fn sig10() {
        assert_eq!(format_sig10(0.5), "0.5000000000");
        assert_eq!(format_sig10(12.0), "12.00000000");
        assert_eq!(format_sig10(0.0), "0");
    }

    #[test]
    fn compensated_dot_matches_exact_sum() {
        let targets = [0u32, 1, 2];
        let probs = [0.1f64, 0.2, 0.7];
        let values = [1.0, 1.0, 1.0];
        assert!((f64::dot(&targets, &probs, &values) - 1.0).abs() < 1e-16);
        assert!(<f64 as Probability>::is_stochastic(&f64::row_sum(&probs)));
        let exact = [q(1, 3), q(1, 3), q(1, 3)];
        assert!(Rational::is_stochastic(&Rational::row_sum(&exact)));
    }
}
