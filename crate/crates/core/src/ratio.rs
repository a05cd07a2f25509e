//! Exact rationals with an explicit infinity marker.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Rational = Ratio<i64>;

/// A non-negative rational or `+inf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExtRational {
    Finite(Rational),
    Infinite,
}

impl ExtRational {
    pub fn new(num: i64, den: i64) -> Self {
        if den == 0 {
            ExtRational::Infinite
        } else {
            ExtRational::Finite(Rational::new(num, den))
        }
    }

    pub fn integer(v: i64) -> Self {
        ExtRational::Finite(Rational::from_integer(v))
    }

    pub fn one() -> Self {
        ExtRational::Finite(Rational::one())
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtRational::Infinite)
    }

    pub fn finite(self) -> Option<Rational> {
        match self {
            ExtRational::Finite(r) => Some(r),
            ExtRational::Infinite => None,
        }
    }

    /// `1/x`, with `1/0 = inf` and `1/inf = 0`.
    pub fn recip(self) -> Self {
        match self {
            ExtRational::Infinite => ExtRational::Finite(Rational::zero()),
            ExtRational::Finite(r) if r.is_zero() => ExtRational::Infinite,
            ExtRational::Finite(r) => ExtRational::Finite(r.recip()),
        }
    }

    /// Numerator and denominator as strings, `("inf", "inf")` for infinity.
    pub fn parts(self) -> (String, String) {
        match self {
            ExtRational::Finite(r) => (r.numer().to_string(), r.denom().to_string()),
            ExtRational::Infinite => ("inf".into(), "inf".into()),
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtRational::Finite(r) => *r.numer() as f64 / *r.denom() as f64,
            ExtRational::Infinite => f64::INFINITY,
        }
    }
}

impl From<Rational> for ExtRational {
    fn from(r: Rational) -> Self {
        ExtRational::Finite(r)
    }
}

impl PartialOrd for ExtRational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtRational {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtRational::Finite(a), ExtRational::Finite(b)) => a.cmp(b),
            (ExtRational::Finite(_), ExtRational::Infinite) => Ordering::Less,
            (ExtRational::Infinite, ExtRational::Finite(_)) => Ordering::Greater,
            (ExtRational::Infinite, ExtRational::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for ExtRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtRational::Finite(r) => write!(f, "{r}"),
            ExtRational::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for ExtRational {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(ExtRational::Infinite);
        }
        parse_rational(s).map(ExtRational::Finite)
    }
}

/// Parses `"3"`, `"3/2"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let bad = || format!("not a rational number: {s:?}");
    match s.trim().split_once('/') {
        None => s.trim().parse::<i64>().map(Rational::from_integer).map_err(|_| bad()),
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(Rational::new(n, d))
        }
    }
}

impl Serialize for ExtRational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExtRational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_puts_infinity_last() {
        let third = ExtRational::new(1, 3);
        assert!(third < ExtRational::one());
        assert!(ExtRational::integer(1_000_000) < ExtRational::Infinite);
        assert_eq!(ExtRational::new(5, 0), ExtRational::Infinite);
    }

    #[test]
    fn recip_maps_zero_and_infinity() {
        assert_eq!(ExtRational::integer(0).recip(), ExtRational::Infinite);
        assert_eq!(ExtRational::Infinite.recip(), ExtRational::integer(0));
        assert_eq!(ExtRational::new(1, 9).recip(), ExtRational::integer(9));
    }

    #[test]
    fn text_round_trip() {
        for s in ["3", "1/3", "inf"] {
            let r: ExtRational = s.parse().unwrap();
            assert_eq!(r.to_string(), s);
        }
        assert_eq!(parse_rational("6/4").unwrap(), Rational::new(3, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }
}
