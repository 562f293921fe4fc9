//! Exact scalars. Rationals stay in lowest terms; dyadics and grid intervals sit on top.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Every real scalar in the crate. `BigRational` keeps values reduced with a
/// positive denominator, so equality is structural.
pub type ExactRational = BigRational;

pub fn int(v: i64) -> ExactRational {
    ExactRational::from_integer(BigInt::from(v))
}

pub fn ratio(n: i64, d: i64) -> ExactRational {
    ExactRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn big(v: BigInt) -> ExactRational {
    ExactRational::from_integer(v)
}

/// The constant 0.99.
pub fn c99() -> ExactRational {
    ratio(99, 100)
}

/// `2^e` for any signed exponent.
pub fn pow2(e: i64) -> ExactRational {
    if e >= 0 {
        big(BigInt::one() << (e as usize))
    } else {
        ExactRational::new(BigInt::one(), BigInt::one() << ((-e) as usize))
    }
}

pub fn pow2_int(e: u64) -> BigInt {
    BigInt::one() << (e as usize)
}

/// `floor(a / b)` for `b > 0`.
pub fn floor_div(a: &ExactRational, b: &ExactRational) -> BigInt {
    (a / b).floor().to_integer()
}

pub fn floor(a: &ExactRational) -> BigInt {
    a.floor().to_integer()
}

pub fn ceil(a: &ExactRational) -> BigInt {
    a.ceil().to_integer()
}

/// `a mod b` in `[0, b)` for `b > 0`.
pub fn rem_euclid(a: &ExactRational, b: &ExactRational) -> ExactRational {
    a - big(floor_div(a, b)) * b
}

/// Canonical `"num/den"` rendering.
pub fn to_string(q: &ExactRational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

pub fn parse(s: &str) -> Result<ExactRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
            let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(ExactRational::new(n, d))
        }
        None => Ok(big(BigInt::from_str(s).map_err(|_| bad())?)),
    }
}

/// If `q` is a positive power of two, its exponent.
pub fn log2_exact(q: &ExactRational) -> Option<i64> {
    if !q.is_positive() {
        return None;
    }
    let n = q.numer();
    let d = q.denom();
    let is_pow2 = |v: &BigInt| v.is_positive() && (v & (v - 1u32)).is_zero();
    if is_pow2(n) && is_pow2(d) {
        Some(n.bits() as i64 - d.bits() as i64)
    } else {
        None
    }
}

pub fn to_f64(q: &ExactRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Serde adapter for `ExactRational` as a `"num/den"` string.
pub mod serde_rational {
    use super::*;

    pub fn serialize<S: Serializer>(q: &ExactRational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&to_string(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ExactRational, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

pub mod serde_rational_opt {
    use super::*;

    pub fn serialize<S: Serializer>(
        q: &Option<ExactRational>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match q {
            Some(q) => s.serialize_some(&to_string(q)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<ExactRational>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| parse(&s).map_err(serde::de::Error::custom)).transpose()
    }
}

pub mod serde_bigint {
    use super::*;

    pub fn serialize<S: Serializer>(v: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigInt, D::Error> {
        let s = String::deserialize(d)?;
        BigInt::from_str(&s).map_err(serde::de::Error::custom)
    }
}

/// `mantissa * 2^-exponent`, canonical: mantissa odd or exponent zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DyadicRational {
    mantissa: BigInt,
    exponent: u64,
}

impl DyadicRational {
    pub fn new(mantissa: BigInt, exponent: u64) -> Self {
        let mut m = mantissa;
        let mut e = exponent;
        if m.is_zero() {
            return Self { mantissa: m, exponent: 0 };
        }
        while e > 0 && m.is_even() {
            m >>= 1;
            e -= 1;
        }
        Self { mantissa: m, exponent: e }
    }

    /// `2^e` for signed `e`.
    pub fn pow2(e: i64) -> Self {
        if e >= 0 {
            Self::new(BigInt::one() << (e as usize), 0)
        } else {
            Self::new(BigInt::one(), (-e) as u64)
        }
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> u64 {
        self.exponent
    }

    pub fn to_rational(&self) -> ExactRational {
        ExactRational::new(self.mantissa.clone(), BigInt::one() << (self.exponent as usize))
    }

    pub fn from_rational(q: &ExactRational) -> Option<Self> {
        let d = q.denom();
        if (d & (d - 1u32)).is_zero() {
            Some(Self::new(q.numer().clone(), d.bits() - 1))
        } else {
            None
        }
    }
}

impl fmt::Display for DyadicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*2^-{}", self.mantissa, self.exponent)
    }
}

#[derive(Serialize, Deserialize)]
struct DyadicRepr {
    m: String,
    e: u64,
}

impl Serialize for DyadicRational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DyadicRepr { m: self.mantissa.to_string(), e: self.exponent }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DyadicRational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = DyadicRepr::deserialize(d)?;
        let m = BigInt::from_str(&r.m).map_err(serde::de::Error::custom)?;
        let v = DyadicRational::new(m, r.e);
        if v.exponent != r.e {
            return Err(serde::de::Error::custom("dyadic rational is not canonical"));
        }
        Ok(v)
    }
}

/// `[index * 2^-resolution, (index + 1) * 2^-resolution)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridInterval {
    #[serde(with = "serde_bigint")]
    pub index: BigInt,
    pub resolution: u64,
}

impl GridInterval {
    pub fn new(index: BigInt, resolution: u64) -> Self {
        Self { index, resolution }
    }

    /// `[0, 2^-resolution)`.
    pub fn origin(resolution: u64) -> Self {
        Self { index: BigInt::zero(), resolution }
    }

    pub fn unit() -> Self {
        Self::origin(0)
    }

    pub fn start(&self) -> ExactRational {
        big(self.index.clone()) * pow2(-(self.resolution as i64))
    }

    pub fn end(&self) -> ExactRational {
        big(&self.index + 1) * pow2(-(self.resolution as i64))
    }

    pub fn length(&self) -> ExactRational {
        pow2(-(self.resolution as i64))
    }

    pub fn contains(&self, x: &ExactRational) -> bool {
        *x >= self.start() && *x < self.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_canonical_form() {
        let d = DyadicRational::new(BigInt::from(12), 5);
        assert_eq!(d.mantissa(), &BigInt::from(3));
        assert_eq!(d.exponent(), 3);
        assert_eq!(d.to_rational(), ratio(3, 8));
        assert_eq!(DyadicRational::new(BigInt::from(8), 0).exponent(), 0);
        assert_eq!(DyadicRational::from_rational(&ratio(1, 3)), None);
        assert_eq!(DyadicRational::from_rational(&ratio(-5, 16)).unwrap().to_rational(), ratio(-5, 16));
    }

    #[test]
    fn parse_and_print() {
        assert_eq!(parse("99/100").unwrap(), c99());
        assert_eq!(parse("-6/4").unwrap(), ratio(-3, 2));
        assert_eq!(parse("7").unwrap(), int(7));
        assert!(parse("1/0").is_err());
        assert!(parse("x").is_err());
        assert_eq!(to_string(&ratio(2, 4)), "1/2");
        assert_eq!(to_string(&int(3)), "3/1");
    }

    #[test]
    fn floor_and_mod() {
        assert_eq!(floor_div(&ratio(-1, 3), &int(1)), BigInt::from(-1));
        assert_eq!(rem_euclid(&ratio(-1, 3), &ratio(1, 2)), ratio(1, 6));
        assert_eq!(log2_exact(&ratio(1, 8)), Some(-3));
        assert_eq!(log2_exact(&int(4)), Some(2));
        assert_eq!(log2_exact(&ratio(3, 8)), None);
    }

    #[test]
    fn grid_interval_bounds() {
        let g = GridInterval::new(BigInt::from(3), 2);
        assert_eq!(g.start(), ratio(3, 4));
        assert_eq!(g.end(), int(1));
        assert!(g.contains(&ratio(3, 4)));
        assert!(!g.contains(&int(1)));
    }
}
