//! Scalar fields used by the transforms.
//!
//! Grid measures are always exact rationals. Coefficients and function values
//! are generic over [`Scalar`], which is implemented for exact rationals, `f64`
//! and the complex versions of both. Norms are reported as `f64` because the
//! smoothness weights `|Q|^s` are irrational in general.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::Value;

use crate::error::{Error, Result};

/// Exact rational number.
pub type Rational = BigRational;

/// Complex number with exact rational parts.
pub type ComplexRational = Complex<BigRational>;

/// A field the transforms can run over.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Whether arithmetic in this field is exact.
    const EXACT: bool;

    fn from_measure(m: &Rational) -> Self;

    /// Conversion from a float. Exact for the rational fields (the binary value
    /// of `x` is kept, not a decimal approximation).
    fn from_f64(x: f64) -> Self;

    fn from_c64(z: Complex64) -> Result<Self>;

    fn to_c64(&self) -> Complex64;

    fn modulus(&self) -> f64 {
        let z = self.to_c64();
        z.re.hypot(z.im)
    }

    /// Parse a real or complex JSON value: a number, a `"p/q"` string, or a
    /// `[re, im]` pair of those.
    fn from_json(v: &Value) -> Result<Self>;

    fn to_json(&self) -> Value;

    /// Real and imaginary parts as text, used by the CSV dumps.
    fn text_parts(&self) -> (String, String);

    fn from_text_parts(re: &str, im: &str) -> Result<Self>;
}

/// Parse `"p/q"`, an integer, or a decimal literal (optionally with exponent)
/// into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let t = text.trim();
    if t.is_empty() {
        return Err(Error::Parse("empty number".into()));
    }
    if let Some((p, q)) = t.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| Error::Parse(format!("bad numerator in {t:?}")))?;
        let q = BigInt::from_str(q.trim()).map_err(|_| Error::Parse(format!("bad denominator in {t:?}")))?;
        if q.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {t:?}")));
        }
        return Ok(Rational::new(p, q));
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => {
            let e: i32 = t[i + 1..]
                .parse()
                .map_err(|_| Error::Parse(format!("bad exponent in {t:?}")))?;
            (&t[..i], e)
        }
        None => (t, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(Error::Parse(format!("not a number: {t:?}")));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(Error::Parse(format!("not a number: {t:?}")));
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(if all_digits.is_empty() { "0" } else { &all_digits })
        .map_err(|_| Error::Parse(format!("not a number: {t:?}")))?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let mut r = Rational::from_integer(numer);
    if scale >= 0 {
        r *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if negative { -r } else { r })
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Ratio<BigInt>::to_f64 only fails on overflow of both parts.
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

fn rational_from_f64(x: f64) -> Rational {
    <Rational as num_traits::FromPrimitive>::from_f64(x).unwrap_or_else(Rational::zero)
}

fn rational_text(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn real_from_json(v: &Value) -> Result<Rational> {
    match v {
        Value::Number(n) => parse_rational(&n.to_string()),
        Value::String(s) => parse_rational(s),
        other => Err(Error::Parse(format!("expected a number, got {other}"))),
    }
}

fn complex_parts_from_json(v: &Value) -> Result<(Rational, Rational)> {
    match v {
        Value::Array(parts) if parts.len() == 2 => {
            Ok((real_from_json(&parts[0])?, real_from_json(&parts[1])?))
        }
        Value::Array(_) => Err(Error::Parse("complex values are [re, im] pairs".into())),
        other => Ok((real_from_json(other)?, Rational::zero())),
    }
}

fn finite_json(x: f64) -> Result<Value> {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .ok_or_else(|| Error::Parse(format!("non-finite value {x}")))
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_measure(m: &Rational) -> Self {
        m.clone()
    }

    fn from_f64(x: f64) -> Self {
        rational_from_f64(x)
    }

    fn from_c64(z: Complex64) -> Result<Self> {
        if z.im != 0.0 {
            return Err(Error::Parse(format!("complex value {z} in a real field")));
        }
        Ok(rational_from_f64(z.re))
    }

    fn to_c64(&self) -> Complex64 {
        Complex64::new(rational_to_f64(self), 0.0)
    }

    fn modulus(&self) -> f64 {
        rational_to_f64(&self.abs())
    }

    fn from_json(v: &Value) -> Result<Self> {
        let (re, im) = complex_parts_from_json(v)?;
        if !im.is_zero() {
            return Err(Error::Parse("complex value in a real field".into()));
        }
        Ok(re)
    }

    fn to_json(&self) -> Value {
        Value::String(rational_text(self))
    }

    fn text_parts(&self) -> (String, String) {
        (rational_text(self), "0".into())
    }

    fn from_text_parts(re: &str, im: &str) -> Result<Self> {
        if !parse_rational(im)?.is_zero() {
            return Err(Error::Parse("complex value in a real field".into()));
        }
        parse_rational(re)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_measure(m: &Rational) -> Self {
        rational_to_f64(m)
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn from_c64(z: Complex64) -> Result<Self> {
        if z.im != 0.0 {
            return Err(Error::Parse(format!("complex value {z} in a real field")));
        }
        Ok(z.re)
    }

    fn to_c64(&self) -> Complex64 {
        Complex64::new(*self, 0.0)
    }

    fn modulus(&self) -> f64 {
        self.abs()
    }

    fn from_json(v: &Value) -> Result<Self> {
        Rational::from_json(v).map(|r| rational_to_f64(&r))
    }

    fn to_json(&self) -> Value {
        finite_json(*self).unwrap_or(Value::Null)
    }

    fn text_parts(&self) -> (String, String) {
        (format!("{self:?}"), "0".into())
    }

    fn from_text_parts(re: &str, im: &str) -> Result<Self> {
        Rational::from_text_parts(re, im).map(|r| rational_to_f64(&r))
    }
}

impl Scalar for ComplexRational {
    const EXACT: bool = true;

    fn from_measure(m: &Rational) -> Self {
        Complex::new(m.clone(), Rational::zero())
    }

    fn from_f64(x: f64) -> Self {
        Complex::new(rational_from_f64(x), Rational::zero())
    }

    fn from_c64(z: Complex64) -> Result<Self> {
        Ok(Complex::new(rational_from_f64(z.re), rational_from_f64(z.im)))
    }

    fn to_c64(&self) -> Complex64 {
        Complex64::new(rational_to_f64(&self.re), rational_to_f64(&self.im))
    }

    fn modulus(&self) -> f64 {
        if self.im.is_zero() {
            rational_to_f64(&self.re.abs())
        } else {
            let z = self.to_c64();
            z.re.hypot(z.im)
        }
    }

    fn from_json(v: &Value) -> Result<Self> {
        let (re, im) = complex_parts_from_json(v)?;
        Ok(Complex::new(re, im))
    }

    fn to_json(&self) -> Value {
        if self.im.is_zero() {
            Value::String(rational_text(&self.re))
        } else {
            Value::Array(vec![
                Value::String(rational_text(&self.re)),
                Value::String(rational_text(&self.im)),
            ])
        }
    }

    fn text_parts(&self) -> (String, String) {
        (rational_text(&self.re), rational_text(&self.im))
    }

    fn from_text_parts(re: &str, im: &str) -> Result<Self> {
        Ok(Complex::new(parse_rational(re)?, parse_rational(im)?))
    }
}

impl Scalar for Complex64 {
    const EXACT: bool = false;

    fn from_measure(m: &Rational) -> Self {
        Complex64::new(rational_to_f64(m), 0.0)
    }

    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }

    fn from_c64(z: Complex64) -> Result<Self> {
        Ok(z)
    }

    fn to_c64(&self) -> Complex64 {
        *self
    }

    fn from_json(v: &Value) -> Result<Self> {
        ComplexRational::from_json(v).map(|z| z.to_c64())
    }

    fn to_json(&self) -> Value {
        if self.im == 0.0 {
            finite_json(self.re).unwrap_or(Value::Null)
        } else {
            Value::Array(vec![
                finite_json(self.re).unwrap_or(Value::Null),
                finite_json(self.im).unwrap_or(Value::Null),
            ])
        }
    }

    fn text_parts(&self) -> (String, String) {
        (format!("{:?}", self.re), format!("{:?}", self.im))
    }

    fn from_text_parts(re: &str, im: &str) -> Result<Self> {
        ComplexRational::from_text_parts(re, im).map(|z| z.to_c64())
    }
}

/// `p/q` as an exact rational. Panics when `q == 0`.
pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals_exactly() {
        assert_eq!(parse_rational("3/6").unwrap(), ratio(1, 2));
        assert_eq!(parse_rational("0.7").unwrap(), ratio(7, 10));
        assert_eq!(parse_rational("-1.25e-1").unwrap(), ratio(-1, 8));
        assert_eq!(parse_rational("12").unwrap(), ratio(12, 1));
        assert_eq!(parse_rational(".5").unwrap(), ratio(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn json_round_trip_keeps_exact_values() {
        let z = ComplexRational::new(ratio(1, 3), ratio(-2, 7));
        let back = ComplexRational::from_json(&z.to_json()).unwrap();
        assert_eq!(back, z);
        let r = ratio(5, 9);
        assert_eq!(Rational::from_json(&r.to_json()).unwrap(), r);
        assert!(Rational::from_json(&serde_json::json!([1, 2])).is_err());
    }

    #[test]
    fn float_conversion_is_exact_binary() {
        let r = <Rational as Scalar>::from_f64(0.1);
        assert_eq!(rational_to_f64(&r), 0.1);
        assert_ne!(r, ratio(1, 10));
    }

    #[test]
    fn modulus_of_complex() {
        let z = ComplexRational::new(ratio(3, 1), ratio(4, 1));
        assert!((z.modulus() - 5.0).abs() < 1e-15);
    }
}
