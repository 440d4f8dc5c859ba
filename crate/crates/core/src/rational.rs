//! Exact rational numbers used for every size and load computation.
//!
//! All normalized cache sizes, subfile sizes and delivery loads are carried
//! as reduced fractions; floating point only ever appears in the optional
//! decimal output of the CLI.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact fraction in canonical reduced form with a positive denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn int(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn clamp(self, lo: Self, hi: Self) -> Self {
        self.max(lo).min(hi)
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Exact product with an integer symbol count. Panics if the result is
    /// not an integer; callers guarantee integrality by choosing F from
    /// [`lcm_denominators`].
    pub fn scale_int(&self, f: u64) -> u64 {
        let scaled = &self.0 * BigRational::from_integer(BigInt::from(f));
        assert!(
            scaled.is_integer(),
            "size {} does not divide symbol count {f}",
            self
        );
        scaled
            .to_integer()
            .to_u64()
            .expect("scaled size out of range")
    }
}

/// Least common multiple of the reduced denominators, as a symbol count.
pub fn lcm_denominators<'a>(sizes: impl Iterator<Item = &'a Rational>) -> u64 {
    let mut acc = BigUint::one();
    for s in sizes {
        let d = s.denom().magnitude();
        acc = acc.lcm(d);
    }
    acc.to_u64().expect("minimum F out of u64 range")
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Parse error for rational literals.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid rational literal `{0}`")]
pub struct ParseRationalError(String);

impl FromStr for Rational {
    type Err = ParseRationalError;

    /// Accepts `p`, `p/q` and exact decimal strings such as `0.15` (= 3/20).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || ParseRationalError(s.to_string());
        if let Some((num, den)) = s.split_once('/') {
            let n: BigInt = num.trim().parse().map_err(|_| bad())?;
            let d: BigInt = den.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            return Ok(Rational(BigRational::new(n, d)));
        }
        if let Some((int_part, frac_part)) = s.split_once('.') {
            if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let negative = int_part.trim_start().starts_with('-');
            let int: BigInt = if int_part.is_empty() || int_part == "-" {
                BigInt::zero()
            } else {
                int_part.parse().map_err(|_| bad())?
            };
            let frac: BigInt = frac_part.parse().map_err(|_| bad())?;
            let den = BigInt::from(10u32).pow(frac_part.len() as u32);
            let mag = int.abs() * &den + frac;
            let signed = if negative { -mag } else { mag };
            return Ok(Rational(BigRational::new(signed, den)));
        }
        let n: BigInt = s.parse().map_err(|_| bad())?;
        Ok(Rational(BigRational::from_integer(n)))
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((self.0).$method(rhs.0))
            }
        }
        impl<'a> $trait<&'a Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: &'a Rational) -> Rational {
                Rational((&self.0).$method(&rhs.0))
            }
        }
        impl<'a> $trait<&'a Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &'a Rational) -> Rational {
                Rational((self.0).$method(&rhs.0))
            }
        }
        impl<'a> $trait<Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((&self.0).$method(rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);

impl Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        assert!(!rhs.is_zero(), "division by zero rational");
        Rational(self.0 / rhs.0)
    }
}

impl<'a> Div<&'a Rational> for &'a Rational {
    type Output = Rational;
    fn div(self, rhs: &'a Rational) -> Rational {
        assert!(!rhs.is_zero(), "division by zero rational");
        Rational(&self.0 / &rhs.0)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl AddAssign for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        self.0 += rhs.0;
    }
}

impl<'a> AddAssign<&'a Rational> for Rational {
    fn add_assign(&mut self, rhs: &'a Rational) {
        self.0 += &rhs.0;
    }
}

impl SubAssign for Rational {
    fn sub_assign(&mut self, rhs: Rational) {
        self.0 -= rhs.0;
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

/// Shorthand used throughout the crate and its tests.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(num, den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_decimal_exactly() {
        assert_eq!("0.15".parse::<Rational>().unwrap(), rat(3, 20));
        assert_eq!("1.0".parse::<Rational>().unwrap(), Rational::one());
        assert_eq!("-0.25".parse::<Rational>().unwrap(), rat(-1, 4));
        assert_eq!("9/20".parse::<Rational>().unwrap(), rat(9, 20));
        assert_eq!("3".parse::<Rational>().unwrap(), Rational::int(3));
        assert!("x/3".parse::<Rational>().is_err());
        assert!("1/0".parse::<Rational>().is_err());
    }

    #[test]
    fn display_reduced() {
        assert_eq!(rat(6, 4).to_string(), "3/2");
        assert_eq!(rat(4, 2).to_string(), "2");
        assert_eq!(rat(0, 7).to_string(), "0");
    }

    #[test]
    fn lcm_of_denominators() {
        let sizes = [rat(0, 1), rat(3, 10), rat(3, 10), rat(0, 1), rat(2, 5)];
        assert_eq!(lcm_denominators(sizes.iter()), 10);
        let sizes = [rat(1, 3), rat(2, 3)];
        assert_eq!(lcm_denominators(sizes.iter()), 3);
        let sizes = [Rational::int(2), Rational::int(5)];
        assert_eq!(lcm_denominators(sizes.iter()), 1);
    }

    #[test]
    fn scale_int_exact() {
        assert_eq!(rat(3, 10).scale_int(10), 3);
        assert_eq!(rat(1, 3).scale_int(9), 3);
    }

    proptest! {
        #[test]
        fn add_sub_roundtrip(an in -200i64..200, ad in 1i64..40, bn in -200i64..200, bd in 1i64..40) {
            let a = rat(an, ad);
            let b = rat(bn, bd);
            prop_assert_eq!((a.clone() + b.clone()) - b, a);
        }

        #[test]
        fn mul_div_roundtrip(an in -200i64..200, ad in 1i64..40, bn in 1i64..200, bd in 1i64..40) {
            let a = rat(an, ad);
            let b = rat(bn, bd);
            prop_assert_eq!((a.clone() * b.clone()) / b, a);
        }
    }
}
