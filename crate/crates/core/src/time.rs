//! Exact simulation time.
//!
//! Times are integer ticks with [`TICKS_PER_UNIT`] ticks per time-unit. Every
//! comparison on the scheduling and verification path is an integer
//! comparison, so "arrives at the same time" means bitwise equality.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Ticks per simulated time-unit (1e-18 resolution).
pub const TICKS_PER_UNIT: i128 = 1_000_000_000_000_000_000;

const TICKS_PER_UNIT_F64: f64 = 1e18;

/// A point in time or a signed duration, in integer ticks.
///
/// Serialized as an exact decimal string of time-units, e.g. `"104.5"`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactTime(i128);

impl ExactTime {
    pub const ZERO: ExactTime = ExactTime(0);
    pub const MAX: ExactTime = ExactTime(i128::MAX);

    pub const fn from_ticks(ticks: i128) -> Self {
        ExactTime(ticks)
    }

    pub const fn ticks(self) -> i128 {
        self.0
    }

    /// Whole time-units, exact.
    pub const fn from_int_units(units: i64) -> Self {
        ExactTime(units as i128 * TICKS_PER_UNIT)
    }

    /// Nearest tick to a real number of time-units.
    pub fn from_units(units: f64) -> Self {
        ExactTime((units * TICKS_PER_UNIT_F64).round() as i128)
    }

    /// Smallest tick not earlier than a real number of time-units.
    ///
    /// Used for propagation delays: a quantized signal never arrives before
    /// its light-speed arrival time.
    pub fn from_units_ceil(units: f64) -> Self {
        ExactTime((units * TICKS_PER_UNIT_F64).ceil() as i128)
    }

    pub fn as_units(self) -> f64 {
        let whole = self.0.div_euclid(TICKS_PER_UNIT);
        let frac = self.0.rem_euclid(TICKS_PER_UNIT);
        whole as f64 + frac as f64 / TICKS_PER_UNIT_F64
    }

    pub fn abs(self) -> Self {
        ExactTime(self.0.abs())
    }

    pub fn halve(self) -> Self {
        ExactTime(self.0 / 2)
    }

    /// Exact decimal form in time-units, without trailing zeros.
    pub fn to_decimal(self) -> String {
        let sign = if self.0 < 0 { "-" } else { "" };
        let mag = self.0.unsigned_abs();
        let unit = TICKS_PER_UNIT as u128;
        let (whole, frac) = (mag / unit, mag % unit);
        if frac == 0 {
            format!("{sign}{whole}")
        } else {
            let digits = format!("{frac:018}");
            format!("{sign}{whole}.{}", digits.trim_end_matches('0'))
        }
    }

    /// Parses the form written by [`ExactTime::to_decimal`].
    pub fn parse_decimal(s: &str) -> Option<Self> {
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
        if whole.is_empty() || frac.len() > 18 {
            return None;
        }
        if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let w: i128 = whole.parse().ok()?;
        let f: i128 = if frac.is_empty() {
            0
        } else {
            format!("{frac:0<18}").parse().ok()?
        };
        let ticks = w.checked_mul(TICKS_PER_UNIT)?.checked_add(f)?;
        Some(ExactTime(if neg { -ticks } else { ticks }))
    }
}

impl Serialize for ExactTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_decimal())
    }
}

struct TimeVisitor;

impl Visitor<'_> for TimeVisitor {
    type Value = ExactTime;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a decimal time string or a number of time-units")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<ExactTime, E> {
        ExactTime::parse_decimal(v).ok_or_else(|| E::custom(format!("invalid time {v:?}")))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExactTime, E> {
        Ok(ExactTime::from_int_units(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExactTime, E> {
        i64::try_from(v)
            .map(ExactTime::from_int_units)
            .map_err(|_| E::custom("time out of range"))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExactTime, E> {
        if v.is_finite() {
            Ok(ExactTime::from_units(v))
        } else {
            Err(E::custom("time must be finite"))
        }
    }
}

impl<'de> Deserialize<'de> for ExactTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(TimeVisitor)
    }
}

impl Add for ExactTime {
    type Output = ExactTime;
    fn add(self, rhs: ExactTime) -> ExactTime {
        ExactTime(self.0 + rhs.0)
    }
}

impl AddAssign for ExactTime {
    fn add_assign(&mut self, rhs: ExactTime) {
        self.0 += rhs.0;
    }
}

impl Sub for ExactTime {
    type Output = ExactTime;
    fn sub(self, rhs: ExactTime) -> ExactTime {
        ExactTime(self.0 - rhs.0)
    }
}

impl Neg for ExactTime {
    type Output = ExactTime;
    fn neg(self) -> ExactTime {
        ExactTime(-self.0)
    }
}

impl Mul<u64> for ExactTime {
    type Output = ExactTime;
    fn mul(self, rhs: u64) -> ExactTime {
        ExactTime(self.0 * rhs as i128)
    }
}

impl Sum for ExactTime {
    fn sum<I: Iterator<Item = ExactTime>>(iter: I) -> ExactTime {
        iter.fold(ExactTime::ZERO, Add::add)
    }
}

impl fmt::Display for ExactTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_units())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_units_are_exact() {
        assert_eq!(ExactTime::from_units(5.0), ExactTime::from_int_units(5));
        assert_eq!(ExactTime::from_units(2.5).ticks(), 25 * TICKS_PER_UNIT / 10);
        assert_eq!(ExactTime::from_int_units(-3).as_units(), -3.0);
    }

    #[test]
    fn ceil_never_rounds_down() {
        let t = ExactTime::from_units_ceil(1.0 / 3.0);
        assert!(t.as_units() >= 1.0 / 3.0 - 1e-15);
        assert_eq!(ExactTime::from_units_ceil(7.0), ExactTime::from_int_units(7));
    }

    #[test]
    fn json_roundtrip_keeps_all_ticks() {
        for ticks in [
            123_456_789_012_345_678_901_234,
            -5,
            0,
            TICKS_PER_UNIT / 2,
            -3 * TICKS_PER_UNIT,
        ] {
            let t = ExactTime::from_ticks(ticks);
            let s = serde_json::to_string(&t).unwrap();
            assert_eq!(serde_json::from_str::<ExactTime>(&s).unwrap(), t);
        }
        assert_eq!(ExactTime::from_units(104.5).to_decimal(), "104.5");
        assert_eq!(ExactTime::from_ticks(-5).to_decimal(), "-0.000000000000000005");
        assert_eq!(
            serde_json::from_str::<ExactTime>("7").unwrap(),
            ExactTime::from_int_units(7)
        );
        assert!(ExactTime::parse_decimal("1.2.3").is_none());
        assert!(ExactTime::parse_decimal(".5").is_none());
    }
}
