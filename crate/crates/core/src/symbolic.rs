//! Words, codings, minimal periods, the partitions `Θ_r`, and the indexing
//! functions `ρ` and `R`.
//!
//! Indices in this module are 0-based; `x|_a^b` in 1-based notation is the
//! slice `x[a-1..b]`.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::ifs::{IfsError, IfsSpec, Symbol};
use crate::interval::Interval;
use crate::psi::{ApproxFn, PsiError, FACTOR_LIMIT};
use crate::rational::{add_scaled, factor_rational, rational_pow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolicError {
    #[error("symbol stream has {len} symbols, index {index} requested")]
    BeyondTable { index: u64, len: usize },
    #[error("periodic stream needs a nonempty cycle")]
    EmptyCycle,
    #[error("invalid symbol stream: {0}")]
    Invalid(String),
    #[error("minimal period {m} is not below n/2 = {half}")]
    PeriodPrecondition { m: usize, half: f64 },
    #[error("n must be at least 2, got {0}")]
    TooShort(usize),
}

/// An infinite coding, either eventually periodic or a finite table that
/// errors past its end.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SymbolStream {
    Periodic { prefix: Vec<Symbol>, cycle: Vec<Symbol> },
    Table(Vec<Symbol>),
}

impl SymbolStream {
    pub fn periodic(prefix: Vec<Symbol>, cycle: Vec<Symbol>) -> Self {
        assert!(!cycle.is_empty(), "periodic stream needs a nonempty cycle");
        SymbolStream::Periodic { prefix, cycle }
    }

    pub fn try_periodic(prefix: Vec<Symbol>, cycle: Vec<Symbol>) -> Result<Self, SymbolicError> {
        if cycle.is_empty() {
            return Err(SymbolicError::EmptyCycle);
        }
        Ok(SymbolStream::Periodic { prefix, cycle })
    }

    pub fn constant(s: Symbol) -> Self {
        SymbolStream::periodic(vec![], vec![s])
    }

    /// `{"prefix": [...], "cycle": [...]}` or `{"table": [...]}`. Symbol lists
    /// may also be digit strings such as `"0101"`.
    pub fn from_json(v: &Value) -> Result<Self, SymbolicError> {
        let obj = v.as_object().ok_or_else(|| SymbolicError::Invalid("coding must be a JSON object".into()))?;
        if let Some(t) = obj.get("table") {
            return Ok(SymbolStream::Table(symbols_from_json(t)?));
        }
        let prefix = match obj.get("prefix") {
            Some(p) => symbols_from_json(p)?,
            None => Vec::new(),
        };
        let cycle = obj
            .get("cycle")
            .ok_or_else(|| SymbolicError::Invalid("coding needs `cycle` or `table`".into()))?;
        SymbolStream::try_periodic(prefix, symbols_from_json(cycle)?)
    }

    pub fn to_json(&self) -> Value {
        match self {
            SymbolStream::Periodic { prefix, cycle } => json!({"prefix": prefix, "cycle": cycle}),
            SymbolStream::Table(t) => json!({"table": t}),
        }
    }

    /// Symbol at 0-based position `i`.
    pub fn at(&self, i: u64) -> Result<Symbol, SymbolicError> {
        match self {
            SymbolStream::Periodic { prefix, cycle } => {
                if i < prefix.len() as u64 {
                    Ok(prefix[i as usize])
                } else {
                    let j = (i - prefix.len() as u64) % cycle.len() as u64;
                    Ok(cycle[j as usize])
                }
            }
            SymbolStream::Table(t) => {
                t.get(i as usize).copied().ok_or(SymbolicError::BeyondTable { index: i, len: t.len() })
            }
        }
    }

    /// The first `n` symbols.
    pub fn prefix(&self, n: usize) -> Result<Vec<Symbol>, SymbolicError> {
        match self {
            SymbolStream::Table(t) if n > t.len() => {
                Err(SymbolicError::BeyondTable { index: n as u64 - 1, len: t.len() })
            }
            SymbolStream::Table(t) => Ok(t[..n].to_vec()),
            SymbolStream::Periodic { .. } => (0..n as u64).map(|i| self.at(i)).collect(),
        }
    }

    /// Number of symbols available (`None` when infinite).
    pub fn len(&self) -> Option<usize> {
        match self {
            SymbolStream::Periodic { .. } => None,
            SymbolStream::Table(t) => Some(t.len()),
        }
    }

    pub fn max_symbol(&self) -> Option<Symbol> {
        match self {
            SymbolStream::Periodic { prefix, cycle } => prefix.iter().chain(cycle).copied().max(),
            SymbolStream::Table(t) => t.iter().copied().max(),
        }
    }

    pub fn check_alphabet(&self, size: usize) -> Result<(), SymbolicError> {
        match self.max_symbol() {
            Some(m) if m as usize >= size => {
                Err(SymbolicError::Invalid(format!("symbol {m} out of range for an alphabet of size {size}")))
            }
            _ => Ok(()),
        }
    }
}

fn symbols_from_json(v: &Value) -> Result<Vec<Symbol>, SymbolicError> {
    match v {
        Value::String(s) => s
            .chars()
            .map(|c| c.to_digit(10).ok_or_else(|| SymbolicError::Invalid(format!("non-digit `{c}` in word"))))
            .collect(),
        Value::Array(a) => a
            .iter()
            .map(|x| {
                x.as_u64()
                    .and_then(|u| Symbol::try_from(u).ok())
                    .ok_or_else(|| SymbolicError::Invalid("symbols must be nonnegative integers".into()))
            })
            .collect(),
        _ => Err(SymbolicError::Invalid("symbols must be an array or a digit string".into())),
    }
}

/// Symbols without separators for alphabets of at most ten letters, comma
/// separated otherwise.
pub fn format_word(w: &[Symbol], alphabet_size: usize) -> String {
    let parts: Vec<String> = w.iter().map(|s| s.to_string()).collect();
    if alphabet_size <= 10 {
        parts.concat()
    } else {
        parts.join(",")
    }
}

/// `z[k]` = length of the longest common prefix of `w` and `w[k..]`, with
/// `z[0] = |w|`.
pub fn z_array(w: &[Symbol]) -> Vec<usize> {
    let n = w.len();
    let mut z = vec![0; n];
    if n == 0 {
        return z;
    }
    z[0] = n;
    let (mut l, mut r) = (0, 0);
    for k in 1..n {
        if k < r {
            z[k] = (r - k).min(z[k - l]);
        }
        while k + z[k] < n && w[z[k]] == w[k + z[k]] {
            z[k] += 1;
        }
        if k + z[k] > r {
            l = k;
            r = k + z[k];
        }
    }
    z
}

/// `m(w)`: least `k >= 1` with `w[..n-k] == w[k..]`, where `n = |w|`; `n` when
/// no smaller shift works.
pub fn minimal_period_word(w: &[Symbol]) -> usize {
    let n = w.len();
    let z = z_array(w);
    (1..n).find(|&k| z[k] >= n - k).unwrap_or(n)
}

/// `m(x, n)` for the first `n` symbols of a coding.
pub fn minimal_period(x: &SymbolStream, n: usize) -> Result<usize, SymbolicError> {
    if n < 2 {
        return Err(SymbolicError::TooShort(n));
    }
    Ok(minimal_period_word(&x.prefix(n)?))
}

/// Checks, for `m = m(w) < n/2`, that `w` is `m`-periodic and that for
/// `1 <= k <= n - m` the shift `k` is a period exactly when `m | k`.
pub fn period_multiples_check_word(w: &[Symbol]) -> Result<bool, SymbolicError> {
    let n = w.len();
    if n < 2 {
        return Err(SymbolicError::TooShort(n));
    }
    let z = z_array(w);
    period_multiples_with_z(&z, n)
}

fn period_multiples_with_z(z: &[usize], n: usize) -> Result<bool, SymbolicError> {
    let m = (1..n).find(|&k| z[k] >= n - k).unwrap_or(n);
    if 2 * m >= n {
        return Err(SymbolicError::PeriodPrecondition { m, half: n as f64 / 2.0 });
    }
    // z is computed on a word of length >= n; truncate to the first n symbols.
    let shift_ok = |k: usize| z[k].min(n - k) >= n - k;
    if !shift_ok(m) {
        return Ok(false);
    }
    Ok((1..=n - m).all(|k| shift_ok(k) == (k % m == 0)))
}

pub fn period_multiples_check(x: &SymbolStream, n: usize) -> Result<bool, SymbolicError> {
    period_multiples_check_word(&x.prefix(n)?)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PeriodSweep {
    pub alphabet: usize,
    pub max_len: usize,
    pub words: u64,
    pub checked: u64,
    pub precondition_skipped: u64,
    pub violations: u64,
}

/// Runs [`period_multiples_check_word`] on every word over `alphabet` symbols
/// of every length `2..=max_len`.
pub fn sweep_period_multiples(alphabet: usize, max_len: usize) -> PeriodSweep {
    let mut total = PeriodSweep { alphabet, max_len, ..Default::default() };
    for n in 2..=max_len {
        let count = (alphabet as u64).pow(n as u32);
        let part = (0..count)
            .into_par_iter()
            .fold(PeriodSweep::default, |mut acc, mut code| {
                let mut w = vec![0 as Symbol; n];
                for s in w.iter_mut() {
                    *s = (code % alphabet as u64) as Symbol;
                    code /= alphabet as u64;
                }
                acc.words += 1;
                match period_multiples_with_z(&z_array(&w), n) {
                    Ok(true) => acc.checked += 1,
                    Ok(false) => {
                        acc.checked += 1;
                        acc.violations += 1;
                    }
                    Err(_) => acc.precondition_skipped += 1,
                }
                acc
            })
            .reduce(PeriodSweep::default, |a, b| PeriodSweep {
                words: a.words + b.words,
                checked: a.checked + b.checked,
                precondition_skipped: a.precondition_skipped + b.precondition_skipped,
                violations: a.violations + b.violations,
                ..a
            });
        total.words += part.words;
        total.checked += part.checked;
        total.precondition_skipped += part.precondition_skipped;
        total.violations += part.violations;
    }
    total
}

/// `|i ∧ j|`, the length of the longest common prefix.
pub fn common_part_length(i: &[Symbol], j: &[Symbol]) -> usize {
    i.iter().zip(j).take_while(|(a, b)| a == b).count()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaPartition {
    pub words: Vec<Vec<Symbol>>,
    /// Set when `r >= diam(X)`, in which case the partition is `{∅}`.
    pub whole_space: bool,
}

/// `Θ_r`: words `i` with `diam(X_i) <= r < diam(X_{i^-})`, in lexicographic
/// order.
pub fn theta_r(ifs: &IfsSpec, r: &BigRational) -> Result<ThetaPartition, IfsError> {
    let diam = ifs.diam_exact().ok_or(IfsError::NotSimilarity)?.clone();
    if !(r > &BigRational::zero()) {
        return Err(IfsError::BadTolerance);
    }
    if &diam <= r {
        return Ok(ThetaPartition { words: vec![Vec::new()], whole_space: true });
    }
    let ratios: Vec<BigRational> = ifs.maps()?.iter().map(|m| m.ratio.clone()).collect();
    let mut words = Vec::new();
    let mut stack: Vec<(Vec<Symbol>, BigRational)> = vec![(Vec::new(), diam)];
    while let Some((w, d)) = stack.pop() {
        for (i, a) in ratios.iter().enumerate().rev() {
            let child_d = &d * a;
            let mut child = w.clone();
            child.push(i as Symbol);
            if &child_d <= r {
                words.push(child);
            } else {
                stack.push((child, child_d));
            }
        }
    }
    words.sort();
    Ok(ThetaPartition { words, whole_space: false })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RhoError {
    #[error("ψ({n}) = 0, so ρ({n}) is unbounded")]
    Unbounded { n: u64 },
    #[error("ρ({n}) requested but the table only reaches n = {max}")]
    OutOfRange { n: u64, max: u64 },
    #[error("ρ({n}) exceeds the depth cap {cap}")]
    DepthCap { n: u64, cap: usize },
    #[error("R({x}) needs ρ beyond the table end n = {max}")]
    InverseOutOfRange { x: f64, max: u64 },
    #[error(transparent)]
    Psi(#[from] PsiError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error(transparent)]
    Ifs(#[from] IfsError),
}

/// Maximum coding depth a [`RhoTable`] will explore.
pub const RHO_DEPTH_CAP: usize = 20_000_000;

/// `ρ(n)` for `0 <= n <= n_max`: the unique integer with
/// `diam(X_{x|ρ}) <= C^{-2} diam(X) ψ(n) < diam(X_{x|ρ-1})`, clamped to at
/// least 1.
#[derive(Clone, Debug)]
pub struct RhoTable {
    ifs: IfsSpec,
    x: SymbolStream,
    psi: ApproxFn,
    rho: Vec<u64>,
    clamped: Vec<u64>,
    /// `n` values where the defining comparison could not be decided rigorously.
    ambiguous: Vec<u64>,
    unbounded_from: Option<u64>,
    /// `ln ∏_{j<k} a_{x_j}` (similarity) or `ln diam(X_{x|k}) - ln diam(X)`
    /// enclosures for `k = 0..`.
    log_prod: Vec<Interval>,
    n_max: u64,
}

struct ExactProduct {
    ratio_factors: Option<Vec<BTreeMap<u64, i64>>>,
    ratios: Vec<BigRational>,
    counts: Vec<i64>,
}

impl ExactProduct {
    fn factors(&self) -> Option<BTreeMap<u64, i64>> {
        let rf = self.ratio_factors.as_ref()?;
        let mut acc = BTreeMap::new();
        for (f, &c) in rf.iter().zip(&self.counts) {
            add_scaled(&mut acc, f, c);
        }
        Some(acc)
    }

    fn value(&self) -> BigRational {
        self.ratios
            .iter()
            .zip(&self.counts)
            .fold(BigRational::one(), |acc, (a, &c)| acc * rational_pow(a, c))
    }
}

impl RhoTable {
    pub fn build(ifs: &IfsSpec, x: &SymbolStream, psi: &ApproxFn, n_max: u64) -> Result<Self, RhoError> {
        x.check_alphabet(ifs.alphabet_size())?;
        if let Some(end) = psi.domain_end() {
            if n_max > end {
                return Err(PsiError::BeyondTable { n: n_max, len: end as usize }.into());
            }
        }
        let mut t = RhoTable {
            ifs: ifs.clone(),
            x: x.clone(),
            psi: psi.clone(),
            rho: Vec::with_capacity(n_max as usize + 1),
            clamped: Vec::new(),
            ambiguous: Vec::new(),
            unbounded_from: None,
            log_prod: vec![Interval::point(0.0)],
            n_max,
        };
        let mut exact = if ifs.is_similarity() {
            let ratios: Vec<BigRational> = ifs.maps()?.iter().map(|m| m.ratio.clone()).collect();
            let ratio_factors = ratios.iter().map(|a| factor_rational(a, FACTOR_LIMIT)).collect();
            Some(ExactProduct { ratio_factors, counts: vec![0; ratios.len()], ratios })
        } else {
            None
        };
        let log_ratios = if ifs.is_similarity() { Some(ifs.log_ratios()?) } else { None };
        let unit_distortion = ifs.distortion() == 1.0;
        let log_c2 = if unit_distortion {
            Interval::point(0.0)
        } else {
            Interval::point(ifs.distortion()).ln().scale(2.0)
        };
        let mut k: usize = 0;
        for n in 0..=n_max {
            let Some(lpsi) = psi.log_value(n)? else {
                t.unbounded_from = Some(n);
                break;
            };
            let threshold = lpsi - log_c2;
            loop {
                let lp = t.log_prod[k];
                let holds = if lp.certainly_le(&threshold) {
                    Some(true)
                } else if threshold.certainly_lt(&lp) {
                    Some(false)
                } else if let (Some(ex), true) = (exact.as_ref(), unit_distortion) {
                    Self::exact_le(ex, psi, n)?
                } else {
                    None
                };
                let holds = match holds {
                    Some(h) => h,
                    None => {
                        if !t.ambiguous.contains(&n) {
                            t.ambiguous.push(n);
                        }
                        lp.mid() <= threshold.mid()
                    }
                };
                if holds {
                    break;
                }
                k += 1;
                if k > RHO_DEPTH_CAP {
                    return Err(RhoError::DepthCap { n, cap: RHO_DEPTH_CAP });
                }
                if k >= t.log_prod.len() {
                    let s = x.at(k as u64 - 1)?;
                    let next = match &log_ratios {
                        Some(l) => t.log_prod[k - 1] + l[s as usize],
                        None => ifs.cylinder_log_diameter(&x.prefix(k)?)? - ifs.diam().ln(),
                    };
                    t.log_prod.push(next);
                }
                if let Some(ex) = exact.as_mut() {
                    ex.counts[x.at(k as u64 - 1)? as usize] += 1;
                }
            }
            if k == 0 {
                t.clamped.push(n);
                t.rho.push(1);
            } else {
                t.rho.push(k as u64);
            }
        }
        Ok(t)
    }

    /// Exact `∏ a ≤ ψ(n)`, or `None` when ψ(n) is irrational.
    fn exact_le(ex: &ExactProduct, psi: &ApproxFn, n: u64) -> Result<Option<bool>, RhoError> {
        if let (Some(pf), Some(psf)) = (ex.factors(), psi.exact_factors(n)?) {
            if pf == psf {
                return Ok(Some(true));
            }
        }
        Ok(psi.exact_value(n)?.map(|v| ex.value() <= v))
    }

    pub fn ifs(&self) -> &IfsSpec {
        &self.ifs
    }

    pub fn coding(&self) -> &SymbolStream {
        &self.x
    }

    pub fn psi(&self) -> &ApproxFn {
        &self.psi
    }

    /// Largest `n` with `ρ(n)` available.
    pub fn n_max(&self) -> u64 {
        self.rho.len() as u64 - 1
    }

    pub fn requested_n_max(&self) -> u64 {
        self.n_max
    }

    pub fn rho(&self, n: u64) -> Result<u64, RhoError> {
        if let Some(&r) = self.rho.get(n as usize) {
            return Ok(r);
        }
        match self.unbounded_from {
            Some(u) if n >= u => Err(RhoError::Unbounded { n }),
            _ => Err(RhoError::OutOfRange { n, max: self.rho.len() as u64 - 1 }),
        }
    }

    pub fn values(&self) -> &[u64] {
        &self.rho
    }

    pub fn clamped(&self) -> &[u64] {
        &self.clamped
    }

    pub fn ambiguous(&self) -> &[u64] {
        &self.ambiguous
    }

    pub fn unbounded_from(&self) -> Option<u64> {
        self.unbounded_from
    }

    /// Enclosure of `ln ∏_{j<k} a_{x_j}` for `k` up to `max ρ`.
    pub fn log_prefix_product(&self, k: usize) -> Option<Interval> {
        self.log_prod.get(k).copied()
    }

    /// `R(x) = max{m >= 1 : x >= m + ρ(m)}`, or 1 when no such `m`.
    pub fn big_r(&self, x: f64) -> Result<u64, RhoError> {
        let fits = |m: u64| -> Result<bool, RhoError> {
            match self.rho(m) {
                Ok(r) => Ok((m + r) as f64 <= x),
                Err(RhoError::Unbounded { .. }) => Ok(false),
                Err(_) => Err(RhoError::InverseOutOfRange { x, max: self.n_max() }),
            }
        };
        if !fits(1)? {
            return Ok(1);
        }
        // m + ρ(m) is strictly increasing, so the admissible m form a prefix.
        let (mut lo, mut hi) = (1u64, 2u64);
        while fits(hi)? {
            lo = hi;
            hi *= 2;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if fits(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rational;
    use proptest::prelude::*;

    fn cantor() -> IfsSpec {
        IfsSpec::missing_digit(3, &[0, 2]).unwrap()
    }

    fn brute_period(w: &[Symbol]) -> usize {
        let n = w.len();
        (1..n).find(|&k| w[..n - k] == w[k..]).unwrap_or(n)
    }

    #[test]
    fn minimal_period_examples() {
        let ab = SymbolStream::periodic(vec![], vec![0, 1]);
        assert_eq!(minimal_period(&ab, 6).unwrap(), 2);
        let aab = SymbolStream::periodic(vec![], vec![0, 0, 1]);
        assert_eq!(minimal_period(&aab, 6).unwrap(), 3);
        let abc = SymbolStream::periodic(vec![], vec![0, 1, 2]);
        assert_eq!(minimal_period(&abc, 6).unwrap(), 3);
        assert_eq!(minimal_period_word(&[0, 1, 1]), 3);
        assert!(matches!(minimal_period(&ab, 1), Err(SymbolicError::TooShort(1))));
    }

    #[test]
    fn period_multiples_examples() {
        let ab = SymbolStream::periodic(vec![], vec![0, 1]);
        assert!(period_multiples_check(&ab, 8).unwrap());
        let aab = SymbolStream::periodic(vec![], vec![0, 0, 1]);
        assert!(period_multiples_check(&aab, 7).unwrap());
        assert!(matches!(
            period_multiples_check_word(&[0, 1, 1, 0]),
            Err(SymbolicError::PeriodPrecondition { m: 3, .. })
        ));
    }

    #[test]
    fn period_sweep_small_is_clean() {
        let s = sweep_period_multiples(2, 10);
        assert_eq!(s.violations, 0);
        assert_eq!(s.words, (2..=10).map(|n| 2u64.pow(n)).sum::<u64>());
        assert!(s.checked > 0 && s.precondition_skipped > 0);
    }

    #[test]
    fn minimal_period_matches_brute_force_exhaustively() {
        for n in 1..=9u32 {
            for code in 0..3u64.pow(n) {
                let mut c = code;
                let w: Vec<Symbol> = (0..n).map(|_| { let s = (c % 3) as Symbol; c /= 3; s }).collect();
                assert_eq!(minimal_period_word(&w), brute_period(&w), "{w:?}");
            }
        }
    }

    #[test]
    fn common_part_examples() {
        assert_eq!(common_part_length(&[0, 1, 0, 1], &[0, 1, 0, 1]), 4);
        assert_eq!(common_part_length(&[0, 1], &[1, 1]), 0);
        assert_eq!(common_part_length(&[0, 0, 1, 1, 0], &[0, 0, 1, 0, 1]), 3);
    }

    #[test]
    fn theta_examples() {
        let t = theta_r(&cantor(), &rational(1, 5)).unwrap();
        assert_eq!(t.words, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        let half_quarter = IfsSpec::from_json(
            r#"{"mode":"similarity","maps":[{"ratio":"1/2","translation":"0"},{"ratio":"1/4","translation":"3/4"}],"diam":"1"}"#,
        )
        .unwrap();
        let t = theta_r(&half_quarter, &rational(1, 4)).unwrap();
        assert_eq!(t.words, vec![vec![0, 0], vec![0, 1], vec![1]]);
        let t = theta_r(&cantor(), &rational(9, 10)).unwrap();
        assert_eq!(t.words, vec![vec![0], vec![1]]);
        let t = theta_r(&cantor(), &rational(1, 1)).unwrap();
        assert!(t.whole_space);
        assert_eq!(t.words, vec![Vec::<Symbol>::new()]);
    }

    #[test]
    fn rho_examples() {
        let zero = SymbolStream::constant(0);
        let t = RhoTable::build(&cantor(), &zero, &ApproxFn::geometric(rational(3, 1)), 50).unwrap();
        for n in 1..=50 {
            assert_eq!(t.rho(n).unwrap(), n);
        }
        assert_eq!(t.rho(0).unwrap(), 1);
        assert_eq!(t.clamped(), &[0]);
        let t = RhoTable::build(&cantor(), &zero, &ApproxFn::geometric(rational(9, 1)), 50).unwrap();
        for n in 1..=50 {
            assert_eq!(t.rho(n).unwrap(), 2 * n);
        }
        assert!(t.ambiguous().is_empty());
        assert!(matches!(t.rho(51), Err(RhoError::OutOfRange { .. })));
    }

    #[test]
    fn rho_unbounded_for_zero_psi() {
        let psi = ApproxFn::table(vec![rational(1, 3), rational(1, 9), rational(0, 1)]).unwrap();
        let t = RhoTable::build(&cantor(), &SymbolStream::constant(0), &psi, 3).unwrap();
        assert_eq!(t.rho(2).unwrap(), 2);
        assert_eq!(t.rho(3), Err(RhoError::Unbounded { n: 3 }));
    }

    #[test]
    fn big_r_examples() {
        let zero = SymbolStream::constant(0);
        let t = RhoTable::build(&cantor(), &zero, &ApproxFn::geometric(rational(3, 1)), 40).unwrap();
        assert_eq!(t.big_r(10.0).unwrap(), 5);
        assert_eq!(t.big_r(0.0).unwrap(), 1);
        let t = RhoTable::build(&cantor(), &zero, &ApproxFn::geometric(rational(9, 1)), 40).unwrap();
        assert_eq!(t.big_r(9.0).unwrap(), 3);
        assert!(matches!(t.big_r(1000.0), Err(RhoError::InverseOutOfRange { .. })));
    }

    fn check_rho_sandwich(ifs: &IfsSpec, x: &SymbolStream, psi: &ApproxFn, t: &RhoTable) {
        let maps = ifs.maps().unwrap();
        for n in 0..=t.n_max() {
            let r = t.rho(n).unwrap() as usize;
            let w = x.prefix(r).unwrap();
            let prod = |k: usize| w[..k].iter().fold(BigRational::one(), |acc, &s| acc * &maps[s as usize].ratio);
            let v = psi.exact_value(n).unwrap().unwrap();
            if t.clamped().contains(&n) {
                assert!(v >= BigRational::one());
                continue;
            }
            assert!(prod(r) <= v, "n = {n}");
            assert!(v < prod(r - 1), "n = {n}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn rho_satisfies_sandwich_and_monotonicity(
            cycle in prop::collection::vec(0u32..2, 1..4),
            b in 2i64..12,
            beta in 0i64..3,
            c_num in 1i64..5,
        ) {
            let ifs = IfsSpec::from_json(
                r#"{"mode":"similarity","maps":[{"ratio":"1/2","translation":"0"},{"ratio":"1/4","translation":"3/4"}],"diam":"1"}"#,
            ).unwrap();
            let x = SymbolStream::periodic(vec![], cycle);
            let psi = ApproxFn::exp_poly(
                rational(c_num, 2),
                crate::psi::Real::Exact(rational(beta, 1)),
                crate::psi::Real::LogOf(rational(b, 1)),
            ).unwrap();
            let t = RhoTable::build(&ifs, &x, &psi, 60).unwrap();
            check_rho_sandwich(&ifs, &x, &psi, &t);
            let v = t.values();
            prop_assert!(v.windows(2).all(|w| w[0] <= w[1]));
            let mut prev = 0;
            for n in 1..=30u64 {
                let r = t.big_r(n as f64).unwrap();
                prop_assert!(r >= prev);
                prev = r;
            }
            for n in 1..=20u64 {
                let x = (n + t.rho(n).unwrap()) as f64;
                prop_assert!(t.big_r(x).unwrap() >= n);
            }
        }

        #[test]
        fn theta_is_a_prefix_free_partition(r_den in 2i64..60, r_num in 1i64..2) {
            let ifs = IfsSpec::from_json(
                r#"{"mode":"similarity","maps":[{"ratio":"1/2","translation":"0"},{"ratio":"1/3","translation":"2/3"}],"diam":"1"}"#,
            ).unwrap();
            let t = theta_r(&ifs, &rational(r_num, r_den)).unwrap();
            for a in &t.words {
                for b in &t.words {
                    if a != b {
                        prop_assert!(!(b.len() >= a.len() && &b[..a.len()] == a.as_slice()));
                    }
                }
            }
            // Each word of length max_len has exactly one prefix in the set.
            let depth = t.words.iter().map(Vec::len).max().unwrap();
            for code in 0..(1u64 << depth) {
                let w: Vec<Symbol> = (0..depth).map(|i| ((code >> i) & 1) as Symbol).collect();
                let hits = t.words.iter().filter(|p| w.starts_with(p)).count();
                prop_assert_eq!(hits, 1);
            }
        }
    }
}
