//! Closed intervals of `f64` with outward rounding.
//!
//! Every operation widens its result by at least one ulp on each side, so a
//! returned interval always contains the exact real result of the operation
//! applied to any points of the operands. Transcendental functions are widened
//! by two ulps to absorb libm error.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[inline]
fn down(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        x
    } else {
        x.next_down()
    }
}

#[inline]
fn up(x: f64) -> f64 {
    if x == f64::INFINITY {
        x
    } else {
        x.next_up()
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    /// Degenerate interval holding exactly `x`.
    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    /// Interval around a value computed with at most `ulps` units of error.
    pub fn around(x: f64, ulps: u32) -> Self {
        let mut lo = x;
        let mut hi = x;
        for _ in 0..ulps {
            lo = down(lo);
            hi = up(hi);
        }
        Interval { lo, hi }
    }

    pub fn from_rational(r: &BigRational) -> Self {
        if r.is_zero() {
            return Interval::point(0.0);
        }
        match r.to_f64() {
            Some(v) if v.is_finite() && v != 0.0 => Interval::around(v, 2),
            _ => {
                // Outside the f64 range: go through logarithms.
                let l = ln_rational(&r.abs());
                let mag = l.exp();
                if r.is_negative() {
                    -mag
                } else {
                    mag
                }
            }
        }
    }

    pub fn mid(&self) -> f64 {
        if self.lo.is_infinite() || self.hi.is_infinite() {
            return if self.lo.is_infinite() { self.hi } else { self.lo };
        }
        0.5 * self.lo + 0.5 * self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// Intersection, or `None` when disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then(|| Interval::new(lo, hi))
    }

    /// Certainly strictly below `other`.
    pub fn certainly_lt(&self, other: &Interval) -> bool {
        self.hi < other.lo
    }

    /// Certainly at most `other`.
    pub fn certainly_le(&self, other: &Interval) -> bool {
        self.hi <= other.lo
    }

    pub fn exp(self) -> Interval {
        let lo = if self.lo == f64::NEG_INFINITY { 0.0 } else { self.lo.exp() };
        let hi = self.hi.exp();
        Interval::new(down(down(lo)).max(0.0), up(up(hi)))
    }

    /// Natural logarithm; the lower end becomes `-inf` at zero.
    pub fn ln(self) -> Interval {
        assert!(self.lo >= 0.0, "log of negative interval");
        let lo = match self.lo {
            0.0 => f64::NEG_INFINITY,
            1.0 => 0.0,
            x => down(down(x.ln())),
        };
        let hi = match self.hi {
            0.0 => f64::NEG_INFINITY,
            1.0 => 0.0,
            x => up(up(x.ln())),
        };
        Interval::new(lo, hi)
    }

    pub fn sqrt(self) -> Interval {
        assert!(self.lo >= 0.0);
        Interval::new(down(self.lo.sqrt()).max(0.0), up(self.hi.sqrt()))
    }

    /// `self^t` for a positive base.
    pub fn powf(self, t: Interval) -> Interval {
        (self.ln() * t).exp()
    }

    pub fn scale(self, k: f64) -> Interval {
        self * Interval::point(k)
    }

    pub fn max(self, other: Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.max(other.hi))
    }

    pub fn min(self, other: Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.min(other.hi))
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            -self
        } else {
            Interval::new(0.0, (-self.lo).max(self.hi))
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval::new(down(self.lo + o.lo), up(self.hi + o.hi))
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval::new(down(self.lo - o.hi), up(self.hi - o.lo))
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }
}

fn mul_or_zero(a: f64, b: f64) -> f64 {
    // 0 * inf is taken as 0: interval ends at infinity stand for unbounded reals.
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let c = [
            mul_or_zero(self.lo, o.lo),
            mul_or_zero(self.lo, o.hi),
            mul_or_zero(self.hi, o.lo),
            mul_or_zero(self.hi, o.hi),
        ];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(down(lo), up(hi))
    }
}

impl Div for Interval {
    type Output = Interval;
    fn div(self, o: Interval) -> Interval {
        assert!(o.lo > 0.0 || o.hi < 0.0, "division by an interval containing zero");
        let c = [self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(down(lo), up(hi))
    }
}

impl From<f64> for Interval {
    fn from(x: f64) -> Self {
        Interval::point(x)
    }
}

/// Enclosure of `ln n` for a positive big integer of any size.
pub fn ln_biguint(n: &BigUint) -> Interval {
    assert!(!n.is_zero(), "log of zero");
    let bits = n.bits();
    if bits <= 1000 {
        let v = n.to_f64().expect("fits in f64");
        return Interval::around(v, 1).ln();
    }
    // n = m * 2^shift with m holding the top 64 bits.
    let shift = bits - 64;
    let m = (n >> shift).to_f64().expect("64 bits fit");
    // Truncation loses less than one unit of m, so n lies in [m, m + 1] * 2^shift.
    let mant = Interval::new(down(m), up(m + 1.0)).ln();
    mant + Interval::point(shift as f64) * ln2()
}

/// Enclosure of `ln r` for a positive rational.
pub fn ln_rational(r: &BigRational) -> Interval {
    assert!(r.is_positive(), "log of non-positive rational");
    let num = r.numer().magnitude();
    let den = r.denom().magnitude();
    ln_biguint(num) - ln_biguint(den)
}

/// Enclosure of a big integer as an `f64` interval.
pub fn bigint_interval(n: &BigInt) -> Interval {
    match n.to_f64() {
        Some(v) if v.is_finite() => {
            // Conversion rounds to nearest; widen by one ulp.
            Interval::around(v, 1)
        }
        _ => {
            if n.sign() == Sign::Minus {
                Interval::new(f64::NEG_INFINITY, -f64::MAX)
            } else {
                Interval::new(f64::MAX, f64::INFINITY)
            }
        }
    }
}

pub fn biguint_interval(n: &BigUint) -> Interval {
    bigint_interval(&BigInt::from(n.clone()))
}

/// Enclosure of ln 2.
pub fn ln2() -> Interval {
    Interval::around(std::f64::consts::LN_2, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;
    use proptest::prelude::*;

    #[test]
    fn ln_of_huge_integer_brackets_bit_count() {
        let n = BigUint::one() << 5000u32;
        let l = ln_biguint(&n);
        let exact = 5000.0 * std::f64::consts::LN_2;
        assert!(l.contains(exact), "{l} vs {exact}");
        assert!(l.width() < 1e-9);
    }

    #[test]
    fn ln_rational_third() {
        let r = BigRational::new(1.into(), 3.into());
        assert!(ln_rational(&r).contains(-(3f64.ln())));
    }

    #[test]
    fn tiny_rational_encloses_via_logs() {
        let den = BigInt::from(3).pow(2000u32);
        let r = BigRational::new(BigInt::one(), den);
        let iv = Interval::from_rational(&r);
        assert!(iv.lo >= 0.0);
        assert!(iv.hi < 1e-300);
    }

    proptest! {
        #[test]
        fn arithmetic_contains_float_result(a in -1e6f64..1e6, b in -1e6f64..1e6, c in 0.1f64..1e3) {
            let (ia, ib, ic) = (Interval::point(a), Interval::point(b), Interval::point(c));
            prop_assert!((ia + ib).contains(a + b));
            prop_assert!((ia - ib).contains(a - b));
            prop_assert!((ia * ib).contains(a * b));
            prop_assert!((ia / ic).contains(a / c));
            prop_assert!(ic.ln().contains(c.ln()));
            prop_assert!((ia / Interval::point(1e6)).exp().contains((a / 1e6).exp()));
        }
    }
}
