//! Fixed-point numerics.
//!
//! Trust scores, authority weights and arbitration coefficients are carried as
//! [`Fixed4`] (four fractional digits). Priority scores are products of two
//! `Fixed4` values and are kept at eight fractional digits in [`Score`] so that
//! no rounding ever happens inside arbitration.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const FIXED4_SCALE: i64 = 10_000;
pub const SCORE_SCALE: i64 = FIXED4_SCALE * FIXED4_SCALE;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid decimal `{0}`: expected at most 4 fractional digits")]
pub struct DecimalError(pub String);

/// A signed decimal with exactly four fractional digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed4(i64);

impl Fixed4 {
    pub const ZERO: Fixed4 = Fixed4(0);
    pub const ONE: Fixed4 = Fixed4(FIXED4_SCALE);

    pub const fn from_raw(raw: i64) -> Self {
        Fixed4(raw)
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    pub const fn from_int(v: i64) -> Self {
        Fixed4(v * FIXED4_SCALE)
    }

    /// Rounds half away from zero to the nearest representable value.
    pub fn from_f64(v: f64) -> Self {
        Fixed4((v * FIXED4_SCALE as f64).round() as i64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / FIXED4_SCALE as f64
    }

    pub fn is_unit_interval(self) -> bool {
        (0..=FIXED4_SCALE).contains(&self.0)
    }

    /// Exact product, widened to eight fractional digits.
    pub fn mul_exact(self, rhs: Fixed4) -> Score {
        Score(self.0 * rhs.0)
    }

    pub fn widen(self) -> Score {
        Score(self.0 * FIXED4_SCALE)
    }
}

fn format_scaled(f: &mut fmt::Formatter<'_>, raw: i64, scale: i64, digits: usize, min_digits: usize) -> fmt::Result {
    let sign = if raw < 0 { "-" } else { "" };
    let abs = raw.unsigned_abs();
    let int = abs / scale as u64;
    let frac = abs % scale as u64;
    let mut frac_str = format!("{frac:0digits$}");
    while frac_str.len() > min_digits && frac_str.ends_with('0') {
        frac_str.pop();
    }
    write!(f, "{sign}{int}.{frac_str}")
}

impl fmt::Display for Fixed4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_scaled(f, self.0, FIXED4_SCALE, 4, 4)
    }
}

impl FromStr for Fixed4 {
    type Err = DecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || DecimalError(s.to_string());
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty()
            || !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
            || frac_part.len() > 4
            || (body.contains('.') && frac_part.is_empty())
        {
            return Err(err());
        }
        let int: i64 = int_part.parse().map_err(|_| err())?;
        let mut frac: i64 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| err())? };
        for _ in frac_part.len()..4 {
            frac *= 10;
        }
        let raw = int.checked_mul(FIXED4_SCALE).and_then(|v| v.checked_add(frac)).ok_or_else(err)?;
        Ok(Fixed4(if neg { -raw } else { raw }))
    }
}

impl Serialize for Fixed4 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Accepts either the canonical string form (`"0.8000"`) or a bare JSON number.
impl<'de> Deserialize<'de> for Fixed4 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Fixed4;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal string or number")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Fixed4, E> {
                v.parse().map_err(E::custom)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Fixed4, E> {
                Ok(Fixed4::from_f64(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Fixed4, E> {
                Ok(Fixed4::from_int(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Fixed4, E> {
                Ok(Fixed4::from_int(v as i64))
            }
        }
        d.deserialize_any(V)
    }
}

/// Arbitration score with eight fractional digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Score(i64);

impl Score {
    pub const fn raw(self) -> i64 {
        self.0
    }

    pub const fn from_raw(raw: i64) -> Self {
        Score(raw)
    }

    pub fn abs_diff(self, other: Score) -> Score {
        Score((self.0 - other.0).abs())
    }
}

impl std::ops::Add for Score {
    type Output = Score;
    fn add(self, rhs: Score) -> Score {
        Score(self.0 + rhs.0)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_scaled(f, self.0, SCORE_SCALE, 8, 4)
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let err = || de::Error::custom(format!("invalid score `{s}`"));
        let (neg, body) = match s.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, s.as_str()),
        };
        let (i, fr) = body.split_once('.').ok_or_else(err)?;
        if fr.len() > 8 || fr.is_empty() || !fr.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let int: i64 = i.parse().map_err(|_| err())?;
        let mut frac: i64 = fr.parse().map_err(|_| err())?;
        for _ in fr.len()..8 {
            frac *= 10;
        }
        let raw = int * SCORE_SCALE + frac;
        Ok(Score(if neg { -raw } else { raw }))
    }
}
