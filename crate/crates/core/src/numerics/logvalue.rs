//! Signed scalars that survive products far outside the `f64` exponent range.
//!
//! Internally a value is `mant * 2^exp` with `mant` in `[0.5, 1)`, so
//! conversions to and from ordinary floats are exact; the natural-log view is
//! computed on demand.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Div, Mul, Neg};

#[derive(Clone, Copy, PartialEq)]
pub struct LogValue {
    sign: i8,
    mant: f64,
    exp: i64,
}

/// Split a finite nonzero float into `(m, e)` with `|m|` in `[0.5, 1)`.
fn frexp(x: f64) -> (f64, i64) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    if raw_exp == 0 {
        // subnormal: scale into the normal range first
        let (m, e) = frexp(x * f64::powi(2.0, 64));
        return (m, e - 64);
    }
    let e = raw_exp - 1022;
    let m_bits = (bits & !(0x7ffu64 << 52)) | (1022u64 << 52);
    (f64::from_bits(m_bits), e)
}

fn ldexp(m: f64, e: i64) -> f64 {
    // two steps keep intermediate powers finite
    if e > 1023 {
        let half = e / 2;
        return m * f64::powi(2.0, half as i32) * f64::powi(2.0, (e - half) as i32);
    }
    if e < -1022 {
        let half = e / 2;
        return m * f64::powi(2.0, half as i32) * f64::powi(2.0, (e - half) as i32);
    }
    m * f64::powi(2.0, e as i32)
}

impl LogValue {
    pub const ZERO: LogValue = LogValue { sign: 0, mant: 0.0, exp: 0 };
    pub const ONE: LogValue = LogValue { sign: 1, mant: 0.5, exp: 1 };

    pub fn from_real(x: f64) -> Self {
        assert!(x.is_finite(), "LogValue::from_real needs a finite input");
        if x == 0.0 {
            return Self::ZERO;
        }
        let (m, e) = frexp(x.abs());
        LogValue { sign: if x > 0.0 { 1 } else { -1 }, mant: m, exp: e }
    }

    /// Build from a sign and a natural-log magnitude.
    pub fn from_log(sign: i8, log_mag: f64) -> Self {
        if sign == 0 || log_mag == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        assert!(log_mag.is_finite(), "log magnitude must be finite");
        let e = (log_mag / std::f64::consts::LN_2).floor() as i64;
        let rest = log_mag - e as f64 * std::f64::consts::LN_2;
        let (m, e2) = frexp(rest.exp());
        LogValue { sign: sign.signum(), mant: m, exp: e + e2 }
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    /// Natural log of the magnitude; `-inf` for zero.
    pub fn log_mag(&self) -> f64 {
        if self.sign == 0 {
            return f64::NEG_INFINITY;
        }
        self.mant.ln() + self.exp as f64 * std::f64::consts::LN_2
    }

    /// Nearest `f64`; saturates to `±inf` / `0` outside the representable range.
    pub fn to_real(&self) -> f64 {
        if self.sign == 0 {
            return 0.0;
        }
        f64::from(self.sign) * ldexp(self.mant, self.exp)
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn abs(&self) -> Self {
        LogValue { sign: self.sign.abs(), ..*self }
    }

    pub fn recip(&self) -> Self {
        assert!(self.sign != 0, "reciprocal of zero");
        let (m, e) = frexp(1.0 / self.mant);
        LogValue { sign: self.sign, mant: m, exp: e - self.exp }
    }

    pub fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Self::ONE;
        }
        let mut acc = Self::ONE;
        for _ in 0..n.unsigned_abs() {
            acc = acc * *self;
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }

    /// Square root of a nonnegative value.
    pub fn sqrt(&self) -> Self {
        assert!(self.sign >= 0, "sqrt of a negative LogValue");
        if self.sign == 0 {
            return Self::ZERO;
        }
        let (m, e) = if self.exp % 2 == 0 { (self.mant, self.exp) } else { (self.mant * 2.0, self.exp - 1) };
        let (m2, e2) = frexp(m.sqrt());
        LogValue { sign: 1, mant: m2, exp: e / 2 + e2 }
    }

    /// Signed sum, evaluated relative to the larger magnitude.
    pub fn add(&self, other: &Self) -> Self {
        if self.sign == 0 {
            return *other;
        }
        if other.sign == 0 {
            return *self;
        }
        let (big, small) = if self.exp >= other.exp { (self, other) } else { (other, self) };
        let shift = small.exp - big.exp;
        let s = f64::from(big.sign) * big.mant + f64::from(small.sign) * ldexp(small.mant, shift);
        if s == 0.0 {
            return Self::ZERO;
        }
        let (m, e) = frexp(s.abs());
        LogValue { sign: if s > 0.0 { 1 } else { -1 }, mant: m, exp: big.exp + e }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&-*other)
    }

    /// Relative difference `|a-b| / max(|a|,|b|)` computed without overflow.
    pub fn rel_diff(&self, other: &Self) -> f64 {
        let d = self.sub(other);
        if d.is_zero() {
            return 0.0;
        }
        let scale = if self.abs().cmp_abs(other) == Ordering::Less { other.abs() } else { self.abs() };
        (d.abs() / scale).to_real()
    }

    fn cmp_abs(&self, other: &Self) -> Ordering {
        match (self.sign == 0, other.sign == 0) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self.exp.cmp(&other.exp).then(self.mant.partial_cmp(&other.mant).unwrap_or(Ordering::Equal)),
        }
    }
}

impl Mul for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: LogValue) -> LogValue {
        if self.sign == 0 || rhs.sign == 0 {
            return LogValue::ZERO;
        }
        let (m, e) = frexp(self.mant * rhs.mant);
        LogValue { sign: self.sign * rhs.sign, mant: m, exp: self.exp + rhs.exp + e }
    }
}

impl Div for LogValue {
    type Output = LogValue;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: LogValue) -> LogValue {
        self * rhs.recip()
    }
}

impl Neg for LogValue {
    type Output = LogValue;
    fn neg(self) -> LogValue {
        LogValue { sign: -self.sign, ..self }
    }
}

impl fmt::Debug for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LogValue(sign={}, log_mag={})", self.sign, self.log_mag())
    }
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_real();
        if v.is_finite() && (v == 0.0 || v.abs() > 1e-300) {
            write!(f, "{v}")
        } else {
            write!(f, "{}exp({})", if self.sign < 0 { "-" } else { "" }, self.log_mag())
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LogValueRepr {
    sign: i8,
    log_mag: f64,
}

impl Serialize for LogValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let log_mag = if self.sign == 0 { 0.0 } else { self.log_mag() };
        LogValueRepr { sign: self.sign, log_mag }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LogValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = LogValueRepr::deserialize(d)?;
        Ok(LogValue::from_log(r.sign, r.log_mag))
    }
}

impl From<f64> for LogValue {
    fn from(x: f64) -> Self {
        LogValue::from_real(x)
    }
}
