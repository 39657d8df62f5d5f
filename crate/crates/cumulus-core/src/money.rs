//! Exact money arithmetic in integer micro-currency units.
//!
//! All billing and invoicing math stays in integers; floating point never
//! touches a total. One unit of currency is 1_000_000 micros.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const MICROS_PER_UNIT: i64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(i64);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid money literal {0:?}")]
pub struct MoneyParseError(String);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_micros(micros: i64) -> Self {
        Money(micros)
    }

    pub const fn from_units(units: i64) -> Self {
        Money(units * MICROS_PER_UNIT)
    }

    /// Parses a decimal literal such as `"0.10"` or `"14.28"` exactly.
    /// At most six fractional digits are representable.
    pub fn parse(s: &str) -> Result<Self, MoneyParseError> {
        let err = || MoneyParseError(s.to_owned());
        let s = s.trim();
        let s = s.strip_prefix('$').unwrap_or(s);
        let (neg, digits) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        if digits.is_empty() {
            return Err(err());
        }
        let (int_part, frac_part) = match digits.split_once('.') {
            Some((i, f)) => (i, f),
            None => (digits, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if frac_part.len() > 6 {
            return Err(err());
        }
        let int_val: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| err())?
        };
        let mut frac_val: i64 = 0;
        if !frac_part.is_empty() {
            if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            frac_val = frac_part.parse().map_err(|_| err())?;
            frac_val *= 10_i64.pow(6 - frac_part.len() as u32);
        }
        let micros = int_val
            .checked_mul(MICROS_PER_UNIT)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(err)?;
        Ok(Money(if neg { -micros } else { micros }))
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    pub fn times(self, n: u64) -> Money {
        Money(self.0 * n as i64)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// `self * num / den` rounded toward zero, computed in 128-bit.
    pub fn mul_ratio_floor(self, num: u64, den: u64) -> Money {
        assert!(den > 0, "zero denominator");
        let v = (self.0 as i128 * num as i128) / den as i128;
        Money(v as i64)
    }

    /// Decimal rendering without a currency sign, e.g. `1.40` or `0.714`.
    /// Always at least two fractional digits; trailing sub-cent zeros trimmed.
    pub fn to_decimal_string(self) -> String {
        let neg = self.0 < 0;
        let abs = self.0.unsigned_abs();
        let units = abs / MICROS_PER_UNIT as u64;
        let micros = abs % MICROS_PER_UNIT as u64;
        let mut frac = format!("{micros:06}");
        while frac.len() > 2 && frac.ends_with('0') {
            frac.pop();
        }
        format!("{}{units}.{frac}", if neg { "-" } else { "" })
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.to_decimal_string())
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => Money::parse(&s).map_err(D::Error::custom),
            Raw::Int(units) => Ok(Money::from_units(units)),
        }
    }
}
