//! Exact rational parsing and small helpers around `BigRational`.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse `{input}` as an exact rational: {reason}")]
pub struct RationalParseError {
    pub input: String,
    pub reason: &'static str,
}

fn fail(input: &str, reason: &'static str) -> RationalParseError {
    RationalParseError { input: input.to_string(), reason }
}

/// Parses `"p/q"`, integers, and decimals with an optional exponent
/// (`"0.6"`, `"-1.5e-3"`) into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, RationalParseError> {
    let t = s.trim();
    if t.is_empty() {
        return Err(fail(s, "empty string"));
    }
    if let Some((p, q)) = t.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| fail(s, "bad numerator"))?;
        let q: BigInt = q.trim().parse().map_err(|_| fail(s, "bad denominator"))?;
        if q.is_zero() {
            return Err(fail(s, "zero denominator"));
        }
        return Ok(BigRational::new(p, q));
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => {
            let e: i64 = t[i + 1..].parse().map_err(|_| fail(s, "bad exponent"))?;
            (&t[..i], e)
        }
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(fail(s, "no digits"));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(fail(s, "unexpected character"));
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().unwrap() };
    if neg {
        num = -num;
    }
    let scale = exponent - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        BigRational::from_integer(num * ten.pow(scale as u32))
    } else {
        BigRational::new(num, ten.pow((-scale) as u32))
    };
    Ok(value)
}

/// `p/q` form, or just `p` for integers.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Integer power with a possibly negative exponent.
pub fn rational_pow(base: &BigRational, exp: i64) -> BigRational {
    if exp >= 0 {
        num_traits::pow::pow(base.clone(), exp as usize)
    } else {
        num_traits::pow::pow(base.recip(), (-exp) as usize)
    }
}

pub fn is_integer(r: &BigRational) -> bool {
    r.denom().is_one()
}

pub fn in_open_unit_interval(r: &BigRational) -> bool {
    r.is_positive() && r < &BigRational::one()
}

pub fn rational(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

/// Prime factorisation of a rational as a map prime -> exponent, using trial
/// division up to `limit`. Returns `None` when a cofactor above the limit
/// remains or the value is not positive.
pub fn factor_rational(r: &BigRational, limit: u64) -> Option<BTreeMap<u64, i64>> {
    if !r.is_positive() {
        return None;
    }
    let mut out = BTreeMap::new();
    factor_into(r.numer().magnitude(), 1, limit, &mut out)?;
    factor_into(r.denom().magnitude(), -1, limit, &mut out)?;
    out.retain(|_, e| *e != 0);
    Some(out)
}

fn factor_into(n: &BigUint, sign: i64, limit: u64, out: &mut BTreeMap<u64, i64>) -> Option<()> {
    let mut n = n.clone();
    let mut p = 2u64;
    while !n.is_one() {
        if p > limit {
            return None;
        }
        let bp = BigUint::from(p);
        if BigUint::from(p) * &bp > n {
            // What remains is prime.
            let q = n.to_u64()?;
            if q > limit {
                return None;
            }
            *out.entry(q).or_insert(0) += sign;
            break;
        }
        while (&n % &bp).is_zero() {
            n /= &bp;
            *out.entry(p).or_insert(0) += sign;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    Some(())
}

/// Adds `k` times `b` into `acc`, exponentwise.
pub fn add_scaled(acc: &mut BTreeMap<u64, i64>, b: &BTreeMap<u64, i64>, k: i64) {
    for (p, e) in b {
        *acc.entry(*p).or_insert(0) += e * k;
    }
    acc.retain(|_, e| *e != 0);
}
