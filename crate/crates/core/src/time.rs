//! Integer simulation time.
//!
//! One tick is one picosecond. CAN bit times at 500 kbit/s (2 us) and
//! Ethernet bit times at 100 Mbit/s (10 ns) are both exact multiples.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TICKS_PER_NS: i64 = 1_000;
pub const TICKS_PER_US: i64 = 1_000_000;
pub const TICKS_PER_MS: i64 = 1_000_000_000;
pub const TICKS_PER_S: i64 = 1_000_000_000_000;

/// Simulation time in picoseconds.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub i64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(i64::MAX);

    pub const fn from_ps(ps: i64) -> Self {
        SimTime(ps)
    }
    pub const fn from_ns(ns: i64) -> Self {
        SimTime(ns * TICKS_PER_NS)
    }
    pub const fn from_us(us: i64) -> Self {
        SimTime(us * TICKS_PER_US)
    }
    pub const fn from_ms(ms: i64) -> Self {
        SimTime(ms * TICKS_PER_MS)
    }
    pub const fn from_secs(s: i64) -> Self {
        SimTime(s * TICKS_PER_S)
    }

    pub const fn ticks(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_S as f64
    }

    pub fn as_us_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_US as f64
    }

    pub fn checked_add(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_add(rhs.0).map(SimTime)
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub fn checked_mul(self, k: i64) -> Option<SimTime> {
        self.0.checked_mul(k).map(SimTime)
    }

    /// Time needed to put `bits` on a wire running at `rate_bps`, rounded up
    /// to the next tick.
    pub fn for_bits(bits: u64, rate_bps: u64) -> SimTime {
        assert!(rate_bps > 0, "bit rate must be positive");
        let num = bits as u128 * TICKS_PER_S as u128;
        let ticks = num.div_ceil(rate_bps as u128);
        SimTime(i64::try_from(ticks).expect("transmission time overflows SimTime"))
    }

    pub fn abs_diff(self, other: SimTime) -> SimTime {
        SimTime((self.0 - other.0).abs())
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        self.checked_add(rhs)
            .unwrap_or_else(|| panic!("simulation time overflow: {self} + {rhs}"))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        self.checked_sub(rhs)
            .unwrap_or_else(|| panic!("simulation time overflow: {self} - {rhs}"))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.0;
        let (div, unit) = if t == 0 {
            (1, "s")
        } else if t % TICKS_PER_S == 0 {
            (TICKS_PER_S, "s")
        } else if t % TICKS_PER_MS == 0 {
            (TICKS_PER_MS, "ms")
        } else if t % TICKS_PER_US == 0 {
            (TICKS_PER_US, "us")
        } else if t % TICKS_PER_NS == 0 {
            (TICKS_PER_NS, "ns")
        } else {
            (1, "ps")
        };
        write!(f, "{}{}", t / div, unit)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuantityError {
    #[error("malformed number `{0}`")]
    Number(String),
    #[error("unknown unit `{unit}` in `{text}`")]
    Unit { text: String, unit: String },
    #[error("value `{0}` is out of range")]
    Range(String),
}

/// Splits `12.5ms` into an exact rational mantissa (numerator, 10^k) and the unit.
fn split_quantity(text: &str) -> Result<(i128, i128, &str), QuantityError> {
    let text = text.trim();
    let end = text
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+'))
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(end);
    if num.is_empty() {
        return Err(QuantityError::Number(text.to_string()));
    }
    let (int_part, frac_part) = match num.split_once('.') {
        Some((i, f)) => (i, f),
        None => (num, ""),
    };
    if frac_part.len() > 12 || (int_part.is_empty() && frac_part.is_empty()) {
        return Err(QuantityError::Number(text.to_string()));
    }
    let digits = format!("{int_part}{frac_part}");
    let mantissa: i128 = digits
        .parse()
        .map_err(|_| QuantityError::Number(text.to_string()))?;
    let scale = 10i128.pow(frac_part.len() as u32);
    Ok((mantissa, scale, unit.trim()))
}

fn scaled(text: &str, mantissa: i128, scale: i128, factor: i128) -> Result<i128, QuantityError> {
    let v = mantissa
        .checked_mul(factor)
        .ok_or_else(|| QuantityError::Range(text.to_string()))?;
    if v % scale != 0 {
        return Err(QuantityError::Range(text.to_string()));
    }
    Ok(v / scale)
}

/// Parses a duration such as `125us`, `2ms`, `1.5s`, `10ns`.
pub fn parse_time(text: &str) -> Result<SimTime, QuantityError> {
    let (m, s, unit) = split_quantity(text)?;
    let factor: i128 = match unit {
        "ps" => 1,
        "ns" => TICKS_PER_NS as i128,
        "us" | "µs" => TICKS_PER_US as i128,
        "ms" => TICKS_PER_MS as i128,
        "s" => TICKS_PER_S as i128,
        _ => {
            return Err(QuantityError::Unit {
                text: text.to_string(),
                unit: unit.to_string(),
            })
        }
    };
    let v = scaled(text, m, s, factor)?;
    i64::try_from(v)
        .map(SimTime)
        .map_err(|_| QuantityError::Range(text.to_string()))
}

/// Parses a bit rate such as `100Mb/s`, `500kb/s`, `1Gb/s` into bits per second.
pub fn parse_rate(text: &str) -> Result<u64, QuantityError> {
    let (m, s, unit) = split_quantity(text)?;
    let factor: i128 = match unit {
        "b/s" | "bit/s" | "bps" => 1,
        "kb/s" | "kbit/s" | "kbps" => 1_000,
        "Mb/s" | "Mbit/s" | "Mbps" => 1_000_000,
        "Gb/s" | "Gbit/s" | "Gbps" => 1_000_000_000,
        _ => {
            return Err(QuantityError::Unit {
                text: text.to_string(),
                unit: unit.to_string(),
            })
        }
    };
    let v = scaled(text, m, s, factor)?;
    u64::try_from(v).map_err(|_| QuantityError::Range(text.to_string()))
}

/// Parses a byte count such as `6B` or `500B`.
pub fn parse_bytes(text: &str) -> Result<u32, QuantityError> {
    let (m, s, unit) = split_quantity(text)?;
    let factor: i128 = match unit {
        "B" => 1,
        "kB" => 1_000,
        _ => {
            return Err(QuantityError::Unit {
                text: text.to_string(),
                unit: unit.to_string(),
            })
        }
    };
    let v = scaled(text, m, s, factor)?;
    u32::try_from(v).map_err(|_| QuantityError::Range(text.to_string()))
}

impl FromStr for SimTime {
    type Err = QuantityError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_time(s)
    }
}

/// Formats a bit rate the way the DSL writes it.
pub fn format_rate(bps: u64) -> String {
    if bps != 0 && bps.is_multiple_of(1_000_000_000) {
        format!("{}Gb/s", bps / 1_000_000_000)
    } else if bps != 0 && bps.is_multiple_of(1_000_000) {
        format!("{}Mb/s", bps / 1_000_000)
    } else if bps != 0 && bps.is_multiple_of(1_000) {
        format!("{}kb/s", bps / 1_000)
    } else {
        format!("{bps}b/s")
    }
}
