//! Approximating functions `ψ : ℕ -> [0, ∞)`.
//!
//! Parametric families carry their shrinking rate exactly; finite tables only
//! admit an estimate.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::interval::{ln_rational, Interval};
use crate::rational::{add_scaled, factor_rational, format_rational, parse_rational, rational_pow};

/// Trial-division bound used when factoring exact values.
pub const FACTOR_LIMIT: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsiError {
    #[error("invalid approximating function: {0}")]
    Invalid(String),
    #[error("ψ table has {len} entries, ψ({n}) requested")]
    BeyondTable { n: u64, len: usize },
    #[error("ψ table must be nonincreasing (entry {0} exceeds its predecessor)")]
    NotMonotone(usize),
    #[error("ψ table is empty")]
    EmptyTable,
}

/// A real parameter kept exact when possible.
#[derive(Clone, Debug, PartialEq)]
pub enum Real {
    Exact(BigRational),
    /// The natural logarithm of a positive rational.
    LogOf(BigRational),
    Float(f64),
}

impl Real {
    pub fn exact(r: BigRational) -> Self {
        Real::Exact(r)
    }

    pub fn interval(&self) -> Interval {
        match self {
            Real::Exact(r) => Interval::from_rational(r),
            Real::LogOf(b) => ln_rational(b),
            Real::Float(x) => Interval::point(*x),
        }
    }

    pub fn value(&self) -> f64 {
        self.interval().mid()
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            Real::Exact(r) => Some(r),
            _ => None,
        }
    }

    /// Accepts `"p/q"`, decimals, `"ln(b)"`, `"log b"` and plain floats.
    pub fn parse(s: &str) -> Result<Real, PsiError> {
        let t = s.trim();
        for head in ["ln", "log"] {
            if let Some(rest) = t.strip_prefix(head) {
                let arg = rest.trim().trim_start_matches('(').trim_end_matches(')').trim();
                let b = parse_rational(arg).map_err(|e| PsiError::Invalid(e.to_string()))?;
                if !b.is_positive() {
                    return Err(PsiError::Invalid(format!("log of non-positive value in `{s}`")));
                }
                return Ok(if b.is_one() { Real::Exact(BigRational::zero()) } else { Real::LogOf(b) });
            }
        }
        if let Ok(r) = parse_rational(t) {
            return Ok(Real::Exact(r));
        }
        match t.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Real::Float(x)),
            _ => Err(PsiError::Invalid(format!("cannot parse `{s}` as a real number"))),
        }
    }

    pub fn from_json(v: &Value, what: &str) -> Result<Real, PsiError> {
        match v {
            Value::String(s) => Real::parse(s),
            Value::Number(n) => Real::parse(&n.to_string()),
            _ => Err(PsiError::Invalid(format!("`{what}` must be a string or number"))),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Real::Exact(r) => r.is_zero(),
            Real::LogOf(_) => false,
            Real::Float(x) => *x == 0.0,
        }
    }

    fn is_nonnegative(&self) -> bool {
        match self {
            Real::Exact(r) => !r.is_negative(),
            Real::LogOf(b) => b >= &BigRational::one(),
            Real::Float(x) => *x >= 0.0,
        }
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Real::Exact(r) => write!(f, "{}", format_rational(r)),
            Real::LogOf(b) => write!(f, "ln({})", format_rational(b)),
            Real::Float(x) => write!(f, "{x:?}"),
        }
    }
}

/// `ψ(n)` for `n >= 0`.
///
/// * `ExpPoly`: `c · n^{-β} · e^{-α n}`, with `ψ(0) = c`.
/// * `SuperExp`: `c · e^{-γ n²}`, shrinking rate infinite.
/// * `Table`: `ψ(1), ψ(2), …` given explicitly; `ψ(0) = ψ(1)`.
#[derive(Clone, Debug, PartialEq)]
pub enum ApproxFn {
    ExpPoly { c: BigRational, beta: Real, alpha: Real },
    SuperExp { c: BigRational, gamma: Real },
    Table(Vec<BigRational>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ShrinkingRate {
    Finite { value: f64, lo: f64, hi: f64, estimate: bool },
    Unbounded { estimate: bool },
}

impl ShrinkingRate {
    pub fn is_estimate(&self) -> bool {
        match self {
            ShrinkingRate::Finite { estimate, .. } | ShrinkingRate::Unbounded { estimate } => *estimate,
        }
    }

    /// The rate as a float, `inf` when unbounded.
    pub fn value(&self) -> f64 {
        match self {
            ShrinkingRate::Finite { value, .. } => *value,
            ShrinkingRate::Unbounded { .. } => f64::INFINITY,
        }
    }

    pub fn interval(&self) -> Interval {
        match self {
            ShrinkingRate::Finite { lo, hi, .. } => Interval::new(*lo, *hi),
            ShrinkingRate::Unbounded { .. } => Interval::point(f64::INFINITY),
        }
    }
}

impl ApproxFn {
    pub fn exp_poly(c: BigRational, beta: Real, alpha: Real) -> Result<Self, PsiError> {
        if !c.is_positive() {
            return Err(PsiError::Invalid("c must be positive".into()));
        }
        if !beta.is_nonnegative() {
            return Err(PsiError::Invalid("beta must be nonnegative".into()));
        }
        if !alpha.is_nonnegative() {
            return Err(PsiError::Invalid("alpha must be nonnegative".into()));
        }
        Ok(ApproxFn::ExpPoly { c, beta, alpha })
    }

    /// `b^{-n}`.
    pub fn geometric(b: BigRational) -> Self {
        ApproxFn::ExpPoly { c: BigRational::one(), beta: Real::Exact(BigRational::zero()), alpha: Real::LogOf(b) }
    }

    pub fn super_exp(c: BigRational, gamma: Real) -> Result<Self, PsiError> {
        if !c.is_positive() || !(gamma.value() > 0.0) {
            return Err(PsiError::Invalid("super-exponential family needs c > 0 and gamma > 0".into()));
        }
        Ok(ApproxFn::SuperExp { c, gamma })
    }

    pub fn table(values: Vec<BigRational>) -> Result<Self, PsiError> {
        if values.is_empty() {
            return Err(PsiError::EmptyTable);
        }
        if let Some(i) = values.iter().position(|v| v.is_negative()) {
            return Err(PsiError::Invalid(format!("table entry {} is negative", i + 1)));
        }
        if let Some(i) = (1..values.len()).find(|&i| values[i] > values[i - 1]) {
            return Err(PsiError::NotMonotone(i + 1));
        }
        Ok(ApproxFn::Table(values))
    }

    /// Parses the JSON forms `{"family":"exp_poly","c","beta","alpha"}`,
    /// `{"family":"super_exp","c","gamma"}` and `{"table":[…]}`.
    pub fn from_json(v: &Value) -> Result<Self, PsiError> {
        let obj = v.as_object().ok_or_else(|| PsiError::Invalid("ψ must be a JSON object".into()))?;
        if let Some(t) = obj.get("table") {
            let arr = t.as_array().ok_or_else(|| PsiError::Invalid("`table` must be an array".into()))?;
            let values = arr
                .iter()
                .map(|x| {
                    let s = match x {
                        Value::String(s) => s.clone(),
                        Value::Number(n) => n.to_string(),
                        _ => return Err(PsiError::Invalid("table entries must be numbers or strings".into())),
                    };
                    parse_rational(&s).map_err(|e| PsiError::Invalid(e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            return ApproxFn::table(values);
        }
        let family = obj.get("family").and_then(Value::as_str).unwrap_or("exp_poly");
        let c = match obj.get("c") {
            None => BigRational::one(),
            Some(v) => match Real::from_json(v, "c")? {
                Real::Exact(r) => r,
                _ => return Err(PsiError::Invalid("`c` must be an exact rational".into())),
            },
        };
        let get = |k: &str| obj.get(k).map(|v| Real::from_json(v, k)).transpose();
        match family {
            "exp_poly" => ApproxFn::exp_poly(
                c,
                get("beta")?.unwrap_or(Real::Exact(BigRational::zero())),
                get("alpha")?.unwrap_or(Real::Exact(BigRational::zero())),
            ),
            "super_exp" => ApproxFn::super_exp(c, get("gamma")?.unwrap_or(Real::Exact(BigRational::one()))),
            other => Err(PsiError::Invalid(format!("unknown family `{other}`"))),
        }
    }

    /// Compact command-line form: `exp:gamma=1.2[,beta=..][,c=..]`,
    /// `poly:beta=3`, `superexp:gamma=1`.
    pub fn parse_cli(s: &str) -> Result<Self, PsiError> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params = BTreeMap::new();
        for kv in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| PsiError::Invalid(format!("expected key=value, got `{kv}`")))?;
            params.insert(k.trim().to_string(), Real::parse(v)?);
        }
        let c = match params.remove("c") {
            None => BigRational::one(),
            Some(Real::Exact(r)) => r,
            Some(_) => return Err(PsiError::Invalid("`c` must be an exact rational".into())),
        };
        let zero = || Real::Exact(BigRational::zero());
        let rate = params.remove("gamma").or_else(|| params.remove("alpha"));
        let f = match head.trim() {
            "exp" => ApproxFn::exp_poly(c, params.remove("beta").unwrap_or_else(zero), rate.unwrap_or_else(zero))?,
            "poly" => ApproxFn::exp_poly(c, params.remove("beta").unwrap_or_else(zero), zero())?,
            "superexp" => ApproxFn::super_exp(c, rate.unwrap_or(Real::Exact(BigRational::one())))?,
            other => return Err(PsiError::Invalid(format!("unknown ψ form `{other}`"))),
        };
        if let Some(k) = params.keys().next() {
            return Err(PsiError::Invalid(format!("unknown parameter `{k}`")));
        }
        Ok(f)
    }

    pub fn to_json(&self) -> Value {
        match self {
            ApproxFn::ExpPoly { c, beta, alpha } => json!({
                "family": "exp_poly",
                "c": format_rational(c),
                "beta": beta.to_string(),
                "alpha": alpha.to_string(),
            }),
            ApproxFn::SuperExp { c, gamma } => json!({
                "family": "super_exp",
                "c": format_rational(c),
                "gamma": gamma.to_string(),
            }),
            ApproxFn::Table(v) => json!({ "table": v.iter().map(format_rational).collect::<Vec<_>>() }),
        }
    }

    pub fn is_parametric(&self) -> bool {
        !matches!(self, ApproxFn::Table(_))
    }

    /// Largest `n` at which `ψ(n)` is defined, if finite.
    pub fn domain_end(&self) -> Option<u64> {
        match self {
            ApproxFn::Table(v) => Some(v.len() as u64),
            _ => None,
        }
    }

    fn table_entry(v: &[BigRational], n: u64) -> Result<&BigRational, PsiError> {
        let idx = if n == 0 { 0 } else { (n - 1) as usize };
        v.get(idx).ok_or(PsiError::BeyondTable { n, len: v.len() })
    }

    /// Enclosure of `ln ψ(n)`; `None` means `ψ(n) = 0`.
    pub fn log_value(&self, n: u64) -> Result<Option<Interval>, PsiError> {
        let nf = Interval::point(n as f64);
        match self {
            ApproxFn::ExpPoly { c, beta, alpha } => {
                let mut l = ln_rational(c) - alpha.interval() * nf;
                if n > 0 && !beta.is_zero() {
                    l = l - beta.interval() * nf.ln();
                }
                Ok(Some(l))
            }
            ApproxFn::SuperExp { c, gamma } => Ok(Some(ln_rational(c) - gamma.interval() * nf * nf)),
            ApproxFn::Table(v) => {
                let e = Self::table_entry(v, n)?;
                Ok(if e.is_zero() { None } else { Some(ln_rational(e)) })
            }
        }
    }

    /// `ψ(n)` as a float (may underflow to 0).
    pub fn value(&self, n: u64) -> Result<f64, PsiError> {
        Ok(match self.log_value(n)? {
            None => 0.0,
            Some(l) => l.mid().exp(),
        })
    }

    /// Exact value when it is rational: tables always, families when `c` is
    /// rational, `β` an integer and `α` zero or the log of a rational.
    pub fn exact_value(&self, n: u64) -> Result<Option<BigRational>, PsiError> {
        match self {
            ApproxFn::Table(v) => Ok(Some(Self::table_entry(v, n)?.clone())),
            ApproxFn::ExpPoly { c, beta, alpha } => {
                let Some(beta_int) = integer_exponent(beta) else { return Ok(None) };
                let mut val = c.clone();
                if n > 0 && beta_int != 0 {
                    val *= rational_pow(&BigRational::from_integer(BigInt::from(n)), -beta_int);
                }
                match alpha {
                    Real::Exact(a) if a.is_zero() => {}
                    Real::LogOf(b) => {
                        let Ok(e) = i64::try_from(n) else { return Ok(None) };
                        val *= rational_pow(b, -e);
                    }
                    _ => return Ok(None),
                }
                Ok(Some(val))
            }
            ApproxFn::SuperExp { .. } => Ok(None),
        }
    }

    /// Prime-exponent vector of `ψ(n)` when [`exact_value`](Self::exact_value)
    /// exists and every prime involved is below [`FACTOR_LIMIT`].
    pub fn exact_factors(&self, n: u64) -> Result<Option<BTreeMap<u64, i64>>, PsiError> {
        match self {
            ApproxFn::Table(v) => {
                let e = Self::table_entry(v, n)?;
                Ok(factor_rational(e, FACTOR_LIMIT))
            }
            ApproxFn::ExpPoly { c, beta, alpha } => {
                let Some(beta_int) = integer_exponent(beta) else { return Ok(None) };
                let Some(mut acc) = factor_rational(c, FACTOR_LIMIT) else { return Ok(None) };
                if n > 1 && beta_int != 0 {
                    let Some(fnn) = factor_rational(&BigRational::from_integer(n.into()), FACTOR_LIMIT) else {
                        return Ok(None);
                    };
                    add_scaled(&mut acc, &fnn, -beta_int);
                }
                match alpha {
                    Real::Exact(a) if a.is_zero() => {}
                    Real::LogOf(b) => {
                        let Some(fb) = factor_rational(b, FACTOR_LIMIT) else { return Ok(None) };
                        add_scaled(&mut acc, &fb, -(n as i64));
                    }
                    _ => return Ok(None),
                }
                Ok(Some(acc))
            }
            ApproxFn::SuperExp { .. } => Ok(None),
        }
    }

    /// `α(ψ) = liminf -ln ψ(n) / n`.
    pub fn shrinking_rate(&self) -> ShrinkingRate {
        match self {
            ApproxFn::ExpPoly { alpha, .. } => {
                let iv = alpha.interval();
                ShrinkingRate::Finite { value: alpha.value(), lo: iv.lo.max(0.0), hi: iv.hi, estimate: false }
            }
            ApproxFn::SuperExp { .. } => ShrinkingRate::Unbounded { estimate: false },
            ApproxFn::Table(v) => table_rate(v),
        }
    }

    /// Critical exponent of the polynomial factor, if any.
    pub fn beta(&self) -> Option<&Real> {
        match self {
            ApproxFn::ExpPoly { beta, .. } => Some(beta),
            _ => None,
        }
    }

    /// `n ↦ ψ(2n + parity)`, as used for the two-step system of continued
    /// fractions. For the parametric families the result agrees with
    /// `ψ(2n + parity)` up to factors bounded above and below, which leaves
    /// shrinking rates and series verdicts unchanged; tables are exact.
    pub fn subsample(&self, parity: u64) -> Result<ApproxFn, PsiError> {
        match self {
            ApproxFn::ExpPoly { c, beta, alpha } => {
                let alpha2 = match alpha {
                    Real::Exact(a) => Real::Exact(a * BigRational::from_integer(2.into())),
                    Real::LogOf(b) => Real::LogOf(b * b),
                    Real::Float(x) => Real::Float(2.0 * x),
                };
                ApproxFn::exp_poly(c.clone(), beta.clone(), alpha2)
            }
            ApproxFn::SuperExp { c, gamma } => {
                let g4 = match gamma {
                    Real::Exact(g) => Real::Exact(g * BigRational::from_integer(4.into())),
                    other => Real::Float(4.0 * other.value()),
                };
                ApproxFn::super_exp(c.clone(), g4)
            }
            ApproxFn::Table(v) => {
                let out: Vec<BigRational> = (1..)
                    .map(|n: usize| 2 * n + (parity % 2) as usize)
                    .take_while(|&m| m <= v.len())
                    .map(|m| v[m - 1].clone())
                    .collect();
                ApproxFn::table(out)
            }
        }
    }
}

fn integer_exponent(beta: &Real) -> Option<i64> {
    match beta {
        Real::Exact(b) if b.is_integer() => b.to_integer().to_i64(),
        Real::Float(x) if *x == 0.0 => Some(0),
        _ => None,
    }
}

fn table_rate(v: &[BigRational]) -> ShrinkingRate {
    if v.iter().any(Zero::is_zero) {
        return ShrinkingRate::Unbounded { estimate: true };
    }
    let n_end = v.len();
    let rate = |n: usize| -ln_rational(&v[n - 1]).mid() / n as f64;
    let start = (n_end / 2).max(1);
    let window: Vec<f64> = (start..=n_end).map(rate).collect();
    let nondecreasing = window.windows(2).all(|w| w[1] >= w[0]);
    let (first, last) = (window[0], *window.last().unwrap());
    if n_end >= 4 && nondecreasing && first > 0.0 && last >= 2.0 * first {
        return ShrinkingRate::Unbounded { estimate: true };
    }
    let min = window.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    ShrinkingRate::Finite { value: min, lo: min, hi: min, estimate: true }
}

impl fmt::Display for ApproxFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ApproxFn::ExpPoly { c, beta, alpha } => {
                write!(f, "{} * n^-({}) * exp(-({}) n)", format_rational(c), beta, alpha)
            }
            ApproxFn::SuperExp { c, gamma } => write!(f, "{} * exp(-({}) n^2)", format_rational(c), gamma),
            ApproxFn::Table(v) => write!(f, "table of {} values", v.len()),
        }
    }
}
