//! Exact rational helpers on top of [`BigRational`].

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub use num_rational::BigRational as Rational;

pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// Parses `p`, `p/q` or a finite decimal such as `0.25`.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((p, q)) = text.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(Rational::new(p, q));
    }
    if let Some((whole, frac)) = text.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let negative = whole.starts_with('-');
        let whole: BigInt = if whole.is_empty() || whole == "-" {
            BigInt::zero()
        } else {
            whole.parse().ok()?
        };
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac: BigInt = frac.parse().ok()?;
        let magnitude = whole.abs() * &scale + frac;
        let numer = if negative { -magnitude } else { magnitude };
        return Some(Rational::new(numer, scale));
    }
    text.parse::<BigInt>().ok().map(Rational::from_integer)
}

/// Prints `p/q`, or `p` when the denominator is one.
pub fn fmt_rational(value: &Rational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or_else(|| {
        // Fall back to a log-domain estimate for values beyond f64 range.
        let n = value.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = value.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

/// Exact rational equal to the given finite float.
pub fn from_f64_exact(value: f64) -> Option<Rational> {
    Rational::from_float(value)
}

/// `Some(k)` when `value == 2^k`.
pub fn exact_log2(value: u64) -> Option<u32> {
    (value != 0 && value.is_power_of_two()).then(|| value.trailing_zeros())
}

/// Least common multiple of all denominators.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// `floor(2^value)` for a non-negative rational, computed exactly by integer
/// root extraction when the denominator is small enough.
pub fn floor_pow2(value: &Rational) -> BigUint {
    assert!(!value.is_negative(), "floor_pow2 of a negative exponent");
    let q = value.denom().to_u32();
    let p = value.numer().to_u64();
    match (p, q) {
        (Some(p), Some(q)) if q <= 4096 && p <= 1 << 20 => {
            (BigUint::one() << p as usize).nth_root(q)
        }
        _ => {
            let approx = to_f64(value).exp2().floor();
            BigUint::from(approx as u128)
        }
    }
}

/// Formats a float with 12 significant digits, `%g` style.
pub fn fmt_float(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let exponent = value.abs().log10().floor() as i32;
    if (-5..12).contains(&exponent) {
        let decimals = (11 - exponent).max(0) as usize;
        let text = format!("{value:.decimals$}");
        trim_zeros(&text)
    } else {
        let text = format!("{value:.11e}");
        let (mantissa, exp) = text.split_once('e').unwrap();
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(text: &str) -> String {
    if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text.to_string()
    }
}
