//! The Cantor-type mass distribution inside `Ŵ(x, ρ)`.
//!
//! A [`Setup`] fixes the system, the target coding `x`, the approximation
//! function and the critical exponent `s`. From it we build level schedules
//! `n_1 < m_1 < n_2 < …`, the avoidance sets `Ω_{p,q}`, and sample words from
//! `η = ∫ μ_A dν(A)`. Masses `μ_A([i|k])` are computed exactly from the
//! product structure of `μ_A`.

use std::ops::{Add, Mul};

use num_bigint::BigInt;
use num_integer::Roots;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dichotomy::{classify, DichotomyError};
use crate::ifs::{IfsError, IfsSpec, Symbol};
use crate::interval::Interval;
use crate::psi::{ApproxFn, PsiError, Real, ShrinkingRate};
use crate::rational::rational_pow;
use crate::symbolic::{minimal_period_word, z_array, RhoError, RhoTable, SymbolStream, SymbolicError};
use crate::thermo::{log_sum_exp, GibbsWeights, PressureProfile, ThermoError};

/// Attempts per `Ω` block before rejection sampling gives up.
pub const REJECTION_CAP: usize = 10_000;
/// Largest number of words [`OmegaSet::enumerate`] will visit.
pub const ENUMERATION_LIMIT: u64 = 1 << 24;
/// Default index cap for relaxed schedules.
pub const RELAXED_CAP: u64 = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructionError {
    #[error(transparent)]
    Rho(#[from] RhoError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Dichotomy(#[from] DichotomyError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error(transparent)]
    Ifs(#[from] IfsError),
    #[error(transparent)]
    Psi(#[from] PsiError),
    #[error("the shrinking rate must be finite and positive, got {0}")]
    BadRate(f64),
    #[error("the construction needs at least two symbols")]
    SmallAlphabet,
    #[error("Σ ε(n) is not divergent at s = {s} ({convergence})")]
    NotDivergent { s: f64, convergence: String },
    #[error("Ω_{{p,q}} needs p + ρ(p) + 2 < q, got p = {p}, q = {q}")]
    BadBlock { p: u64, q: u64 },
    #[error("word has length {got}, expected {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("{words:e} words exceed the enumeration limit")]
    TooLarge { words: f64 },
    #[error("strict schedules are not enumerable; sample from a relaxed schedule")]
    StrictSampling,
    #[error("schedule has no level starting beyond depth {0}")]
    ScheduleTooShort(u64),
    #[error("rejection sampling of Ω_{{{p},{q}}} failed after {tries} attempts")]
    RejectionFailed { p: u64, q: u64, tries: usize },
}

type Result<T> = std::result::Result<T, ConstructionError>;

/// Semiring used by the `Ω` dynamic programme: `f64` or exact rationals.
pub trait Weight: Clone + Zero + One + Add<Output = Self> + Mul<Output = Self> {}
impl<T: Clone + Zero + One + Add<Output = T> + Mul<Output = T>> Weight for T {}

/// Everything the construction depends on.
#[derive(Clone, Debug)]
pub struct Setup {
    rho: RhoTable,
    alpha: Interval,
    s: f64,
    gibbs: GibbsWeights,
    c: f64,
    log_a_min: Interval,
    log_a_max: Interval,
    x: Vec<Symbol>,
}

impl Setup {
    /// Uses the Hill–Velani exponent for `α(ψ)` as `s` and the matching
    /// equilibrium weights. `ρ` is tabulated up to `n_max`.
    pub fn new(ifs: &IfsSpec, x: &SymbolStream, psi: &ApproxFn, n_max: u64) -> Result<Self> {
        if ifs.alphabet_size() < 2 {
            return Err(ConstructionError::SmallAlphabet);
        }
        let alpha = match psi.shrinking_rate() {
            ShrinkingRate::Finite { lo, hi, value, .. } if value > 0.0 && lo > 0.0 => Interval::new(lo, hi),
            r => return Err(ConstructionError::BadRate(r.value())),
        };
        let s = PressureProfile::new(ifs).hv_exponent(alpha.mid())?.value;
        let gibbs = GibbsWeights::equilibrium(ifs, alpha.mid())?;
        let rho = RhoTable::build(ifs, x, psi, n_max)?;
        let top = rho.values().last().copied().unwrap_or(1) as usize;
        let x = x.prefix(top.max(n_max as usize) + 2)?;
        Ok(Setup {
            c: ifs.distortion(),
            log_a_min: ifs.log_a_min(),
            log_a_max: ifs.log_a_max(),
            rho,
            alpha,
            s,
            gibbs,
            x,
        })
    }

    pub fn rho_table(&self) -> &RhoTable {
        &self.rho
    }

    pub fn ifs(&self) -> &IfsSpec {
        self.rho.ifs()
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn alpha(&self) -> Interval {
        self.alpha
    }

    pub fn gibbs(&self) -> &GibbsWeights {
        &self.gibbs
    }

    /// The first `n` symbols of `x`.
    pub fn x(&self, n: usize) -> &[Symbol] {
        &self.x[..n]
    }

    pub fn rho(&self, n: u64) -> Result<u64> {
        Ok(self.rho.rho(n)?)
    }

    /// `R(v) = max{m >= 1 : m + ρ(m) <= v}`, 1 when there is none.
    pub fn big_r(&self, v: f64) -> Result<u64> {
        Ok(self.rho.big_r(v)?)
    }

    fn log_theta(&self) -> Interval {
        let s = Interval::point(self.s);
        (self.log_a_max - self.alpha) * s
    }

    /// `α / (-2 ln a_min)`.
    fn rate_ratio(&self) -> Interval {
        self.alpha / (-self.log_a_min).scale(2.0)
    }

    /// `ln ε(n) = α s n + s ln ‖f'_{x|ρ(n)}‖`.
    pub fn log_epsilon(&self, n: u64) -> Result<Interval> {
        let r = self.rho(n)? as usize;
        let lp = self
            .rho
            .log_prefix_product(r)
            .ok_or(RhoError::OutOfRange { n, max: self.rho.n_max() })?;
        let s = Interval::point(self.s);
        Ok(self.alpha * s * Interval::point(n as f64) + s * lp)
    }

    /// `b^n ∏_{j<ρ(n)} a_{x_j}` when `α = ln b` with `b` rational, so that
    /// `ε(n)` is this value raised to the power `s`.
    pub fn epsilon_base_exact(&self, n: u64) -> Result<Option<BigRational>> {
        let b = match self.rho.psi() {
            ApproxFn::ExpPoly { alpha: Real::LogOf(b), .. } => b.clone(),
            _ => return Ok(None),
        };
        if !self.ifs().is_similarity() {
            return Ok(None);
        }
        let r = self.rho(n)? as usize;
        let mut counts = vec![0i64; self.ifs().alphabet_size()];
        for &sym in &self.x[..r] {
            counts[sym as usize] += 1;
        }
        let mut acc = rational_pow(&b, n as i64);
        for (i, &k) in counts.iter().enumerate() {
            acc *= rational_pow(self.ifs().ratio(i as Symbol)?, k);
        }
        Ok(Some(acc))
    }

    fn log_p(&self, w: &[Symbol]) -> f64 {
        self.gibbs.log_mass(w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Strict,
    Relaxed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleOptions {
    pub mode: ScheduleMode,
    pub max_levels: usize,
    /// Multiplies the thresholds `p_ℓ = 2^{-ℓ}` (relaxed mode only).
    pub threshold_scale: f64,
    /// Largest index a relaxed schedule may use.
    pub cap: u64,
    /// Relaxed mode stops each threshold search after this many steps past
    /// the structural minimum, keeping the index instead. `None` means
    /// `ρ(n_ℓ)`.
    pub search_width: Option<u64>,
}

impl ScheduleOptions {
    pub fn strict() -> Self {
        ScheduleOptions { mode: ScheduleMode::Strict, max_levels: 16, threshold_scale: 1.0, cap: u64::MAX, search_width: None }
    }

    pub fn relaxed(cap: u64) -> Self {
        ScheduleOptions { mode: ScheduleMode::Relaxed, max_levels: 16, threshold_scale: 1.0, cap, search_width: None }
    }
}

/// Lower bounds on `n_1` from the four conditions on the first level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FirstLevelBounds {
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
    /// `ln(C θ^{min(1,r) √(1+r) √n_1})`, which must be negative.
    pub iv_log: f64,
    /// `ρ(n) >= α n / (-2 ln a_min)` holds on the tabulated range from here on.
    pub rho_lower_bound_from: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Level {
    pub n: u64,
    pub m: u64,
    /// `ln Σ_{k=n}^{m} ε(k)`.
    pub log_eps_sum: Interval,
    /// Log of the level-`ℓ` expression bounded by `p_ℓ` when choosing `n`.
    pub log_cond_n: Interval,
    /// Log of the level-`ℓ` expression bounded by `p_ℓ` when choosing `m`.
    pub log_cond_m: Interval,
    /// `ln(scale · 2^{-ℓ})`.
    pub log_threshold: f64,
    /// Whether the two threshold conditions hold (always true when strict).
    pub cond_n_met: bool,
    pub cond_m_met: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub mode: ScheduleMode,
    pub alpha: Interval,
    pub s: f64,
    pub c: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub threshold_scale: f64,
    pub cap: u64,
    pub first_level: FirstLevelBounds,
    pub levels: Vec<Level>,
    /// Strict schedules with every comparison decided rigorously.
    pub certified: bool,
    pub stop_reason: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl Schedule {
    pub fn n1(&self) -> u64 {
        self.levels[0].n
    }

    /// Index of the first level with `n_ℓ > depth`.
    pub fn level_beyond(&self, depth: u64) -> Option<usize> {
        self.levels.iter().position(|l| l.n > depth)
    }
}

fn prefactor(setup: &Setup, level: usize) -> Interval {
    let l = level as f64;
    let s = setup.s;
    Interval::point(setup.c).ln().scale((1.0 + s) * l) - setup.log_a_min.scale(2.0 * s * l)
}

fn check_divergence(setup: &Setup) -> Result<()> {
    let v = classify(setup.ifs(), setup.rho.coding(), setup.rho.psi(), Some(setup.s))?;
    match v.convergence.diverges() {
        Some(true) => Ok(()),
        _ => Err(ConstructionError::NotDivergent { s: setup.s, convergence: format!("{:?}", v.convergence) }),
    }
}

/// Greedy level search. Strict mode keeps every condition. Relaxed mode
/// asks `n_ℓ > P + ρ(P) + 2` with `P = m_{ℓ-1} + ρ(m_{ℓ-1})` in place of the
/// squared gap, and searches each threshold condition over a bounded window,
/// falling back to the structural minimum and recording the miss.
pub fn build_schedule(setup: &Setup, opts: &ScheduleOptions) -> Result<Schedule> {
    check_divergence(setup)?;
    let strict = opts.mode == ScheduleMode::Strict;
    let scale = if strict { 1.0 } else { opts.threshold_scale };
    let table_end = setup.rho.n_max();
    let cap = if strict { table_end } else { opts.cap.min(table_end) };
    let s = Interval::point(setup.s);
    let sa = setup.alpha * s;
    let neg_log_amin = -setup.log_a_min;

    let i_bound = 4f64.max((Interval::point(4.0) / (setup.alpha * setup.alpha)).hi);
    let ii_bound = {
        let t = (neg_log_amin.scale(4.0) + setup.alpha) / setup.alpha;
        (t * t).hi
    };
    let iii_bound = {
        let a = neg_log_amin.scale(8.0) / setup.alpha;
        let b = neg_log_amin.scale(2.0) / setup.alpha + Interval::point(2.0);
        (a * b).hi
    };
    let r = setup.rate_ratio();
    let r_min = r.min(Interval::point(1.0));
    let iv_log = |n: u64| -> Interval {
        Interval::point(setup.c).ln()
            + setup.log_theta() * r_min * (Interval::point(1.0) + r).sqrt() * Interval::point(n as f64).sqrt()
    };
    // Last tabulated index where ρ(n) >= r n fails.
    let mut last_fail = 0u64;
    for n in 0..=table_end {
        let bound = (r * Interval::point(n as f64)).hi;
        if (setup.rho(n)? as f64) < bound {
            last_fail = n;
        }
    }
    let rho_ok = |n1: u64| n1 as f64 - (n1 as f64).sqrt() > last_fail as f64;

    let mut flags = Vec::new();
    if !strict {
        flags.push("relaxed schedule: bounded threshold search, squared gap dropped; not a certificate".to_string());
    }
    let mut levels: Vec<Level> = Vec::new();
    let mut sum_prev = 0u64; // Σ_{j<ℓ} (m_j + ρ(m_j))
    let mut log_prod_prev = Interval::point(0.0); // Σ_{j<ℓ} ln Σ ε
    let mut stop_reason = format!("reached {} levels", opts.max_levels);
    let mut n_floor = i_bound.max(ii_bound).max(iii_bound).floor() as u64 + 1;
    let mut iv = f64::NAN;
    for level in 1..=opts.max_levels {
        let log_thr = scale.ln() - level as f64 * std::f64::consts::LN_2;
        let pre = prefactor(setup, level);
        let twol = 2.0 * level as f64;
        let cond_n = |n: u64| pre - sa * Interval::point(n as f64 - sum_prev as f64 - twol) - log_prod_prev;
        // smallest n with cond_n(n) < threshold, starting from the linear solve
        let need = (pre.hi - log_prod_prev.lo - log_thr) / sa.lo + sum_prev as f64 + twol;
        let ok_first = |n: u64| level > 1 || (iv_log(n).hi < 0.0 && rho_ok(n));
        let mut n = n_floor;
        while !ok_first(n) && n <= cap {
            n += 1;
        }
        let structural = n;
        let width = |n: u64| -> Result<u64> { Ok(opts.search_width.unwrap_or(setup.rho(n.min(table_end))?)) };
        let n_limit = if strict { cap } else { structural.saturating_add(width(structural)?).min(cap) };
        if need.is_finite() && need > n as f64 {
            n = (need.floor() as u64).min(n_limit.saturating_add(1));
        }
        while n <= n_limit && !(ok_first(n) && cond_n(n).hi < log_thr) {
            n += 1;
        }
        let cond_n_met = n <= n_limit;
        if !cond_n_met && !strict {
            n = structural;
        }
        if n > cap {
            stop_reason = format!("level {level}: n would exceed the index cap {cap}");
            break;
        }
        if level == 1 {
            iv = iv_log(n).hi;
        }
        // m > n + ρ(n) with the m-condition below threshold
        let mut m = n;
        let mut log_sum = setup.log_epsilon(n)?;
        let m_min = n + setup.rho(n)? + 1;
        let cond_m = |log_sum: Interval| pre + sa * Interval::point(sum_prev as f64 + twol) - log_prod_prev - log_sum;
        let m_limit = if strict { cap } else { m_min.saturating_add(width(n)?).min(cap) };
        let mut found = false;
        let mut cond_m_met = false;
        while m < m_limit {
            m += 1;
            log_sum = log_sum_exp([log_sum, setup.log_epsilon(m)?].into_iter());
            if m >= m_min && cond_m(log_sum).hi < log_thr {
                found = true;
                cond_m_met = true;
                break;
            }
        }
        if !found && !strict && m_min <= cap {
            // keep the structural minimum
            m = n;
            log_sum = setup.log_epsilon(n)?;
            while m < m_min {
                m += 1;
                log_sum = log_sum_exp([log_sum, setup.log_epsilon(m)?].into_iter());
            }
            found = true;
        }
        if !found {
            stop_reason = format!("level {level}: m would exceed the index cap {cap}");
            break;
        }
        let rho_m = setup.rho(m)?;
        levels.push(Level {
            n,
            m,
            log_eps_sum: log_sum,
            log_cond_n: cond_n(n),
            log_cond_m: cond_m(log_sum),
            log_threshold: log_thr,
            cond_n_met,
            cond_m_met,
        });
        sum_prev += m + rho_m;
        log_prod_prev = log_prod_prev + log_sum;
        n_floor = if strict {
            let sq = (2 * m + rho_m) as u128;
            let sq = sq * sq;
            if sq >= cap as u128 {
                stop_reason = format!("level {}: the squared gap exceeds the ρ table", level + 1);
                break;
            }
            (sq as u64).max(m + rho_m + 2) + 1
        } else {
            let p = m + rho_m;
            if p > table_end {
                stop_reason = format!("level {}: ρ needed beyond the table", level + 1);
                break;
            }
            p + setup.rho(p)? + 3
        };
        if n_floor > cap {
            stop_reason = format!("level {}: n would exceed the index cap {cap}", level + 1);
            break;
        }
    }
    if levels.is_empty() {
        return Err(ConstructionError::ScheduleTooShort(cap));
    }
    let used_to = levels.last().map(|l| l.m).unwrap_or(0);
    let ambiguous = setup.rho.ambiguous().iter().any(|&n| n <= used_to);
    if ambiguous {
        flags.push("some ρ values were decided by a floating-point midpoint".to_string());
    }
    Ok(Schedule {
        mode: opts.mode,
        alpha: setup.alpha,
        s: setup.s,
        c: setup.c,
        a_min: setup.ifs().a_min(),
        a_max: setup.ifs().a_max(),
        threshold_scale: scale,
        cap,
        first_level: FirstLevelBounds {
            i: i_bound,
            ii: ii_bound,
            iii: iii_bound,
            iv_log: iv,
            rho_lower_bound_from: last_fail + 1,
        },
        levels,
        certified: strict && !ambiguous,
        stop_reason,
        flags,
    })
}

/// `ν` restricted to level `ℓ`: `ε(A) / Σ_{k=n}^{m} ε(k)` for `A ∈ [n, m]`.
pub fn nu_weights(setup: &Setup, level: &Level) -> Result<Vec<f64>> {
    let logs: Vec<f64> = (level.n..=level.m)
        .map(|k| setup.log_epsilon(k).map(|l| l.mid()))
        .collect::<Result<_>>()?;
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Exact level weights when every `ε(k)` in the level is provably equal.
pub fn nu_exact(setup: &Setup, level: &Level) -> Result<Option<Vec<BigRational>>> {
    let first = match setup.epsilon_base_exact(level.n)? {
        Some(v) => v,
        None => return Ok(None),
    };
    for k in level.n + 1..=level.m {
        if setup.epsilon_base_exact(k)?.as_ref() != Some(&first) {
            return Ok(None);
        }
    }
    let count = (level.m - level.n + 1) as i64;
    Ok(Some(vec![BigRational::new(1.into(), count.into()); count as usize]))
}

#[derive(Clone, Debug)]
struct Trie {
    children: Vec<Vec<Option<usize>>>,
    terminal: Vec<bool>,
}

impl Trie {
    fn new(m: usize) -> Self {
        Trie { children: vec![vec![None; m]], terminal: vec![false] }
    }

    fn insert(&mut self, w: &[Symbol]) {
        let m = self.children[0].len();
        let mut node = 0;
        for &a in w {
            node = match self.children[node][a as usize] {
                Some(c) => c,
                None => {
                    self.children.push(vec![None; m]);
                    self.terminal.push(false);
                    let c = self.children.len() - 1;
                    self.children[node][a as usize] = Some(c);
                    c
                }
            };
        }
        self.terminal[node] = true;
    }

    fn is_empty(&self) -> bool {
        self.children.len() == 1
    }
}

/// The avoidance set `Ω_{p,q} ⊆ Λ^{q-p-2}`.
///
/// A word `w` is a member when none of these occur:
/// * a prefix of `w` equals `x|_{p-ℓ+2}^{ρ(ℓ)}` for `R(p+√p+1) < ℓ <= p`;
/// * `w` has `x|_1^{ρ(ℓ+p+1)}` at offset `ℓ`, for `0 <= ℓ < R(q-1) - p`;
/// * the suffix of `w` from offset `ℓ` is a prefix of `x`, for
///   `R(q-1) - p <= ℓ <= q - √q` (and `ℓ < |w|`).
#[derive(Clone, Debug)]
pub struct OmegaSet {
    pub p: u64,
    pub q: u64,
    pub len: usize,
    alphabet: usize,
    /// `(start in x, length)`, 0-based.
    pub prefix_patterns: Vec<(usize, usize)>,
    /// `(offset in w, length)`; the pattern is always a prefix of `x`.
    pub interior_patterns: Vec<(usize, usize)>,
    /// Inclusive range of tail offsets, if nonempty.
    pub tail_range: Option<(usize, usize)>,
    x: Vec<Symbol>,
}

fn ceil_sqrt(q: u64) -> u64 {
    let f = q.sqrt();
    if f * f == q {
        f
    } else {
        f + 1
    }
}

impl OmegaSet {
    pub fn new(setup: &Setup, p: u64, q: u64) -> Result<Self> {
        let rp = setup.rho(p)?;
        if p + rp + 2 >= q {
            return Err(ConstructionError::BadBlock { p, q });
        }
        let len = (q - p - 2) as usize;
        let mut prefix_patterns = Vec::new();
        let lo = setup.big_r(p as f64 + (p as f64).sqrt() + 1.0)? + 1;
        for l in lo..=p {
            let r = setup.rho(l)?;
            let start = p - l + 2; // 1-based
            if start > r {
                continue;
            }
            prefix_patterns.push(((start - 1) as usize, (r - start + 1) as usize));
        }
        let rq = setup.big_r((q - 1) as f64)?;
        let mut interior_patterns = Vec::new();
        if rq > p {
            for l in 0..(rq - p) {
                interior_patterns.push((l as usize, setup.rho(l + p + 1)? as usize));
            }
        }
        let t_lo = rq.saturating_sub(p);
        let t_hi = (q - ceil_sqrt(q)).min(len as u64 - 1);
        let tail_range = (t_lo <= t_hi).then_some((t_lo as usize, t_hi as usize));
        let need = prefix_patterns
            .iter()
            .map(|&(s, l)| s + l)
            .chain(interior_patterns.iter().map(|&(_, l)| l))
            .max()
            .unwrap_or(0)
            .max(len);
        Ok(OmegaSet {
            p,
            q,
            len,
            alphabet: setup.ifs().alphabet_size(),
            prefix_patterns,
            interior_patterns,
            tail_range,
            x: setup.x(need).to_vec(),
        })
    }

    /// Direct check of every clause.
    pub fn contains(&self, w: &[Symbol]) -> Result<bool> {
        if w.len() != self.len {
            return Err(ConstructionError::LengthMismatch { got: w.len(), want: self.len });
        }
        for &(s, l) in &self.prefix_patterns {
            if l <= w.len() && w[..l] == self.x[s..s + l] {
                return Ok(false);
            }
        }
        for &(o, l) in &self.interior_patterns {
            if w[o..o + l] == self.x[..l] {
                return Ok(false);
            }
        }
        if let Some((a, b)) = self.tail_range {
            for o in a..=b {
                let l = self.len - o;
                if w[o..] == self.x[..l] {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Number of distinct clauses.
    pub fn clause_count(&self) -> usize {
        self.prefix_patterns.len()
            + self.interior_patterns.len()
            + self.tail_range.map_or(0, |(a, b)| b - a + 1)
    }

    fn automaton(&self) -> Automaton {
        Automaton::new(&self.x[..self.len], self.alphabet, &self.interior_patterns, self.len)
    }

    /// Rows the trie walk may read: one past the longest prefix pattern.
    fn trie_rows(&self) -> usize {
        self.prefix_patterns.iter().map(|&(_, l)| l).max().unwrap_or(0).min(self.len)
    }

    fn trie(&self) -> Trie {
        let mut t = Trie::new(self.alphabet);
        for &(s, l) in &self.prefix_patterns {
            t.insert(&self.x[s..s + l]);
        }
        t
    }

    /// `ℙ(Ω_{p,q})` for Bernoulli weights, by a backward pass over the
    /// prefix automaton of `x`.
    pub fn probability<T: Weight>(&self, weights: &[T]) -> T {
        let aut = self.automaton();
        let rows = aut.backward(weights, self.tail_range, self.trie_rows());
        let trie = self.trie();
        trie_value(&trie, &aut, weights, &rows, 0, 0, 0)
    }

    /// Prepares prefix queries `ℙ({w ∈ Ω : w starts with u})` for `|u| <= upto`.
    pub fn prefix_oracle(&self, weights: &[f64], upto: usize) -> PrefixOracle {
        let aut = self.automaton();
        let upto = upto.min(self.len);
        let rows = aut.backward(weights, self.tail_range, upto.max(self.trie_rows()));
        let trie = self.trie();
        let total = trie_value(&trie, &aut, weights, &rows, 0, 0, 0);
        PrefixOracle { aut, trie, rows, weights: weights.to_vec(), total }
    }

    /// Exhaustive sum of `ℙ(w)` over members, with the member count.
    pub fn enumerate(&self, weights: &[f64]) -> Result<(f64, u64)> {
        let total = (self.alphabet as f64).powi(self.len as i32);
        if total > ENUMERATION_LIMIT as f64 {
            return Err(ConstructionError::TooLarge { words: total });
        }
        let m = self.alphabet as u64;
        let len = self.len;
        let (mass, count) = (0..total as u64)
            .into_par_iter()
            .fold(
                || (vec![0 as Symbol; len], 0.0f64, 0u64),
                |(mut w, mass, count), idx| {
                    let mut v = idx;
                    for slot in w.iter_mut().rev() {
                        *slot = (v % m) as Symbol;
                        v /= m;
                    }
                    if self.contains(&w).unwrap_or(false) {
                        let pw: f64 = w.iter().map(|&a| weights[a as usize]).product();
                        (w, mass + pw, count + 1)
                    } else {
                        (w, mass, count)
                    }
                },
            )
            .map(|(_, mass, count)| (mass, count))
            .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        Ok((mass, count))
    }

    /// Bernoulli word of length `|w|` under `weights`.
    pub fn sample_word(&self, dist: &WeightedIndex<f64>, rng: &mut ChaCha8Rng) -> Vec<Symbol> {
        (0..self.len).map(|_| dist.sample(rng) as Symbol).collect()
    }

    /// Monte Carlo estimate `(mean, 3σ)`.
    pub fn monte_carlo(&self, weights: &[f64], samples: usize, seed: u64) -> Result<(f64, f64)> {
        let dist = WeightedIndex::new(weights).expect("positive weights");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0usize;
        for _ in 0..samples {
            let w = self.sample_word(&dist, &mut rng);
            if self.contains(&w)? {
                hits += 1;
            }
        }
        let p = hits as f64 / samples as f64;
        Ok((p, 3.0 * (p * (1.0 - p) / samples as f64).sqrt()))
    }
}

/// Prefix automaton of `x|_1^len` with the interior-clause checks.
#[derive(Clone, Debug)]
struct Automaton {
    len: usize,
    m: usize,
    delta: Vec<u32>,
    z: Vec<usize>,
    /// `viol[j]`: pattern length completed at position `j` (1-based), if any.
    viol: Vec<Option<usize>>,
}

impl Automaton {
    fn new(x: &[Symbol], m: usize, interior: &[(usize, usize)], len: usize) -> Self {
        let n = x.len();
        let mut fail = vec![0usize; n + 1];
        let mut k = 0;
        for i in 1..n {
            while k > 0 && x[i] != x[k] {
                k = fail[k];
            }
            if x[i] == x[k] {
                k += 1;
            }
            fail[i + 1] = k;
        }
        let mut delta = vec![0u32; (n + 1) * m];
        for s in 0..=n {
            for a in 0..m {
                delta[s * m + a] = if s < n && x[s] as usize == a {
                    (s + 1) as u32
                } else if s == 0 {
                    0
                } else {
                    delta[fail[s] * m + a]
                };
            }
        }
        let mut viol = vec![None; len + 1];
        for &(o, l) in interior {
            viol[o + l] = Some(l);
        }
        Automaton { len, m, delta, z: z_array(x), viol }
    }

    fn step(&self, s: usize, a: Symbol) -> usize {
        self.delta[s * self.m + a as usize] as usize
    }

    /// Whether `x|_1^t` is a suffix of the text read so far in state `s`.
    fn border(&self, s: usize, t: usize) -> bool {
        t <= s && (t == s || self.z[s - t] >= t)
    }

    fn violates(&self, pos: usize, s: usize) -> bool {
        matches!(self.viol[pos], Some(t) if self.border(s, t))
    }

    fn tail_ok(&self, s: usize, tail: Option<(usize, usize)>) -> bool {
        match tail {
            None => true,
            Some((a, b)) => {
                let (t_lo, t_hi) = (self.len - b, (self.len - a).min(s));
                !(t_lo..=t_hi).any(|t| self.border(s, t))
            }
        }
    }

    /// Completion probabilities `B[j][s]` for rows `j <= keep`.
    fn backward<T: Weight>(&self, w: &[T], tail: Option<(usize, usize)>, keep: usize) -> Vec<Vec<T>> {
        let n = self.len;
        let mut next: Vec<T> = (0..=n).map(|s| if self.tail_ok(s, tail) { T::one() } else { T::zero() }).collect();
        let mut kept = vec![Vec::new(); keep + 1];
        if n <= keep {
            kept[n] = next.clone();
        }
        for j in (0..n).rev() {
            let mut cur = vec![T::zero(); j + 1];
            for (s, slot) in cur.iter_mut().enumerate() {
                let mut acc = T::zero();
                for a in 0..self.m {
                    let t = self.step(s, a as Symbol);
                    if self.violates(j + 1, t) {
                        continue;
                    }
                    let v = &next[t];
                    if !v.is_zero() {
                        acc = acc + w[a].clone() * v.clone();
                    }
                }
                *slot = acc;
            }
            if j <= keep {
                kept[j] = cur.clone();
            }
            next = cur;
        }
        kept
    }
}

fn trie_value<T: Weight>(
    trie: &Trie,
    aut: &Automaton,
    w: &[T],
    rows: &[Vec<T>],
    node: usize,
    depth: usize,
    state: usize,
) -> T {
    if trie.terminal[node] {
        return T::zero();
    }
    if trie.is_empty() || depth == aut.len {
        return rows[depth][state].clone();
    }
    let mut acc = T::zero();
    for a in 0..aut.m {
        let t = aut.step(state, a as Symbol);
        if aut.violates(depth + 1, t) {
            continue;
        }
        let v = match trie.children[node][a] {
            Some(c) => trie_value(trie, aut, w, rows, c, depth + 1, t),
            None => rows[depth + 1][t].clone(),
        };
        acc = acc + w[a].clone() * v;
    }
    acc
}

/// Answers `ℙ({w ∈ Ω : w starts with u})` from precomputed rows.
#[derive(Clone, Debug)]
pub struct PrefixOracle {
    aut: Automaton,
    trie: Trie,
    rows: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// `ℙ(Ω)`.
    pub total: f64,
}

impl PrefixOracle {
    pub fn prefix_probability(&self, u: &[Symbol]) -> f64 {
        assert!(u.len() < self.rows.len(), "prefix longer than the prepared rows");
        let mut node = Some(0usize);
        let mut state = 0usize;
        let mut mass = 1.0;
        if self.trie.terminal[0] {
            return 0.0;
        }
        for (j, &a) in u.iter().enumerate() {
            state = self.aut.step(state, a);
            if self.aut.violates(j + 1, state) {
                return 0.0;
            }
            mass *= self.weights[a as usize];
            if let Some(n) = node {
                node = self.trie.children[n][a as usize];
                if let Some(c) = node {
                    if self.trie.terminal[c] {
                        return 0.0;
                    }
                }
            }
        }
        match node {
            Some(n) if !self.trie.is_empty() => {
                mass * trie_value(&self.trie, &self.aut, &self.weights, &self.rows, n, u.len(), state)
            }
            _ => mass * self.rows[u.len()][state],
        }
    }
}

/// Lower bound `1 - C'θ^{min(√p, √q - p, r p)}` with `θ = a_max^s e^{-αs}`
/// and `r = α / (-2 ln a_min)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OmegaBound {
    pub in_hypothesis: bool,
    pub c_prime: f64,
    pub exponent: f64,
    pub bound: f64,
}

pub fn omega_lower_bound(setup: &Setup, n1: u64, p: u64, q: u64) -> Result<OmegaBound> {
    let theta = setup.log_theta().mid().exp();
    let r = setup.rate_ratio().mid();
    let c_prime = setup.c * (1.0 / (1.0 - theta) + theta.powi(-2) / (1.0 - theta) + theta.powf(r) / (1.0 - theta.powf(r)));
    let pf = p as f64;
    let exponent = pf.sqrt().min((q as f64).sqrt() - pf).min(r * pf);
    let (pp, qq) = (p as u128, q as u128);
    let in_hypothesis = p > n1 && qq > (pp + setup.rho(p)? as u128 + 2).max((pp + 2) * (pp + 2));
    Ok(OmegaBound { in_hypothesis, c_prime, exponent, bound: 1.0 - c_prime * theta.powf(exponent) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum OmegaMethod {
    /// Automaton dynamic programme, exact up to float rounding.
    Exact,
    Enumeration,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OmegaMeasure {
    pub p: u64,
    pub q: u64,
    pub len: usize,
    pub method: OmegaMethod,
    pub value: f64,
    pub error: f64,
    pub lower_bound: OmegaBound,
    /// `value + error >= bound`; only meaningful in hypothesis.
    pub respects_bound: bool,
}

pub fn omega_measure(setup: &Setup, n1: u64, p: u64, q: u64, method: OmegaMethod) -> Result<OmegaMeasure> {
    let omega = OmegaSet::new(setup, p, q)?;
    let w = setup.gibbs.weights();
    let (value, error) = match method {
        OmegaMethod::Exact => {
            let v = omega.probability(&w);
            (v, 4.0 * (omega.len as f64 + 2.0) * f64::EPSILON)
        }
        OmegaMethod::Enumeration => (omega.enumerate(&w)?.0, 1e-12),
        OmegaMethod::MonteCarlo { samples, seed } => omega.monte_carlo(&w, samples, seed)?,
    };
    let lower_bound = omega_lower_bound(setup, n1, p, q)?;
    let respects_bound = value + error >= lower_bound.bound;
    Ok(OmegaMeasure { p, q, len: omega.len, method, value, error, lower_bound, respects_bound })
}

/// Symbols chosen at a hit index `A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BlockSymbols {
    pub omega: Symbol,
    pub tau: Symbol,
    pub omega_forbidden: Symbol,
    pub tau_forbidden: Symbol,
}

fn smallest_other(a: Symbol) -> Symbol {
    if a == 0 {
        1
    } else {
        0
    }
}

/// `ω ≠ x_{m(x, ρ(⌊A - √A⌋))}` and `τ ≠ x_{ρ(A) - ⌊ρ(A)/m⌋ m + 1}` with
/// `m = m(x, ρ(A))`, each the smallest admissible symbol.
pub fn block_symbols(setup: &Setup, a: u64) -> Result<BlockSymbols> {
    let back = (a as f64 - (a as f64).sqrt()).floor() as u64;
    let r_back = setup.rho(back)? as usize;
    let m_back = minimal_period_word(setup.x(r_back.max(1)));
    let omega_forbidden = setup.x[m_back - 1];
    let r = setup.rho(a)? as usize;
    let m = minimal_period_word(setup.x(r));
    let tau_forbidden = setup.x[r - (r / m) * m];
    Ok(BlockSymbols {
        omega: smallest_other(omega_forbidden),
        tau: smallest_other(tau_forbidden),
        omega_forbidden,
        tau_forbidden,
    })
}

/// One draw from `η` truncated to `depth` symbols.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaSample {
    pub seed: u64,
    /// Realized `A_1, …, A_L` where `A_L` is the first index past `depth`.
    pub a_prefix: Vec<u64>,
    pub word: Vec<Symbol>,
    /// `{ℓ : ℓ + ρ(ℓ) <= depth, σ^ℓ(word) starts with x|ρ(ℓ)}`.
    pub hits: Vec<u64>,
    /// Full `Ω` blocks, one per completed level, kept for mass evaluation.
    #[serde(skip)]
    pub blocks: Vec<Vec<Symbol>>,
    pub y: Symbol,
    pub block_symbols: Vec<BlockSymbols>,
}

impl EtaSample {
    /// The realized hits visible in the truncated word.
    pub fn expected_hits(&self, setup: &Setup) -> Result<Vec<u64>> {
        let depth = self.word.len() as u64;
        let mut out = Vec::new();
        for &a in &self.a_prefix {
            if a + setup.rho(a)? <= depth {
                out.push(a);
            }
        }
        Ok(out)
    }
}

/// Positions `ℓ <= |w|` where `σ^ℓ w` begins with `x|ρ(ℓ)` inside `w`.
pub fn hit_set(setup: &Setup, w: &[Symbol]) -> Result<Vec<u64>> {
    let k = w.len() as u64;
    let mut hits = Vec::new();
    for l in 0..=k {
        let r = setup.rho(l)?;
        if l + r > k {
            continue;
        }
        let (l, r) = (l as usize, r as usize);
        if w[l..l + r] == setup.x[..r] {
            hits.push(l as u64);
        }
    }
    Ok(hits)
}

/// Draws `A`, then a word from `μ_A`, truncated to `depth` symbols.
pub fn sample_eta(setup: &Setup, schedule: &Schedule, depth: u64, seed: u64) -> Result<EtaSample> {
    if schedule.mode == ScheduleMode::Strict {
        return Err(ConstructionError::StrictSampling);
    }
    let last = schedule.level_beyond(depth).ok_or(ConstructionError::ScheduleTooShort(depth))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a_prefix = Vec::with_capacity(last + 1);
    for level in &schedule.levels[..=last] {
        let nu = nu_weights(setup, level)?;
        let idx = WeightedIndex::new(&nu).expect("ν weights are positive").sample(&mut rng);
        a_prefix.push(level.n + idx as u64);
    }
    let y = smallest_other(setup.x[0]);
    let mut word: Vec<Symbol> = vec![y; a_prefix[0] as usize - 1];
    let dist = WeightedIndex::new(setup.gibbs.weights()).expect("positive Gibbs weights");
    let mut blocks = Vec::new();
    let mut symbols = Vec::new();
    for k in 0..last {
        let a = a_prefix[k];
        let bs = block_symbols(setup, a)?;
        let r = setup.rho(a)? as usize;
        word.push(bs.omega);
        word.extend_from_slice(&setup.x[..r]);
        word.push(bs.tau);
        symbols.push(bs);
        let p = a + r as u64;
        let q = a_prefix[k + 1];
        let omega = OmegaSet::new(setup, p, q)?;
        let mut tries = 0;
        let block = loop {
            let w = omega.sample_word(&dist, &mut rng);
            if omega.contains(&w)? {
                break w;
            }
            tries += 1;
            if tries >= REJECTION_CAP {
                return Err(ConstructionError::RejectionFailed { p, q, tries });
            }
        };
        word.extend_from_slice(&block);
        blocks.push(block);
        if word.len() as u64 >= depth {
            break;
        }
    }
    word.truncate(depth as usize);
    let hits = hit_set(setup, &word)?;
    a_prefix.truncate(blocks.len() + 1);
    Ok(EtaSample { seed, a_prefix, word, hits, blocks, y, block_symbols: symbols })
}

/// `μ_A([i|k])` and the right-hand sides of the two mass bounds at one `k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassPoint {
    pub k: u64,
    pub level: usize,
    /// `true` when `A_ℓ <= k < A_ℓ + ρ(A_ℓ)`.
    pub inside_target_block: bool,
    pub log_mu: f64,
    pub log_rhs_coarse: f64,
    pub log_rhs_fine: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleMasses {
    pub seed: u64,
    pub points: Vec<MassPoint>,
    /// `ln ℙ(Ω_j)` for each completed block.
    pub log_omega: Vec<f64>,
    /// `ln ℙ(y^{A_1 - 1})`.
    pub log_y_block: f64,
    /// `ν([A_1, …, A_ℓ]) μ_A([i|A_ℓ + ρ(A_ℓ)]) / diam(X_{i|k})^s`, a lower
    /// bound for `η([i|k]) / diam(X_{i|k})^s` at those `k`.
    pub eta_lower_ratio: Vec<(u64, f64)>,
}

/// Exact `μ_A` prefix masses for one sample, with the coarse and fine mass bounds.
pub fn sample_masses(setup: &Setup, schedule: &Schedule, sample: &EtaSample) -> Result<SampleMasses> {
    let s = setup.s;
    let sa = setup.alpha.mid() * s;
    let log_amin = setup.log_a_min.mid();
    let log_c = setup.c.ln();
    let a = &sample.a_prefix;
    let depth = sample.word.len() as u64;
    let rhos: Vec<u64> = a.iter().map(|&v| setup.rho(v)).collect::<Result<_>>()?;
    let log_x = |t: u64| setup.rho.log_prefix_product(t as usize).map(|i| i.mid()).unwrap_or(f64::NAN);
    let ifs = setup.ifs();
    let log_ratios: Vec<f64> = ifs.log_ratios()?.iter().map(Interval::mid).collect();
    // Prefix sums of ln a along the word.
    let mut log_f = vec![0.0; sample.word.len() + 1];
    for (j, &sym) in sample.word.iter().enumerate() {
        log_f[j + 1] = log_f[j] + log_ratios[sym as usize];
    }
    let mut oracles = Vec::new();
    let mut log_omega = Vec::new();
    let mut log_block = Vec::new();
    for (j, block) in sample.blocks.iter().enumerate() {
        let omega = OmegaSet::new(setup, a[j] + rhos[j], a[j + 1])?;
        let start = a[j] + rhos[j] + 2; // 1-based position of the block
        let upto = depth.saturating_sub(start - 1).min(block.len() as u64) as usize;
        let oracle = omega.prefix_oracle(&setup.gibbs.weights(), upto);
        log_omega.push(oracle.total.ln());
        log_block.push(setup.log_p(block));
        oracles.push((start, oracle));
    }
    let log_y_block = setup.log_p(&sample.word[..a[0] as usize - 1]);
    let mut points = Vec::new();
    let mut eta_lower_ratio = Vec::new();
    let mut log_nu = 0.0;
    for k in a[0]..=depth {
        let l = a.iter().rposition(|&v| v <= k).expect("k >= A_1");
        if l >= sample.blocks.len() {
            break;
        }
        let level = l + 1;
        let mut log_mu: f64 = (0..l).map(|j| log_block[j] - log_omega[j]).sum();
        let (start, oracle) = &oracles[l];
        if k >= *start {
            let u = &sample.blocks[l][..(k - start + 1) as usize];
            log_mu += oracle.prefix_probability(u).ln() - log_omega[l];
        }
        let pre = (1.0 + s) * level as f64 * log_c - 2.0 * level as f64 * s * log_amin;
        let inside = k < a[l] + rhos[l];
        let sum_rho_before: u64 = rhos[..l].iter().sum();
        let sum_rho_through = sum_rho_before + rhos[l];
        let log_x_before: f64 = rhos[..l].iter().map(|&r| log_x(r)).sum();
        let log_x_through = log_x_before + log_x(rhos[l]);
        let twol = 2.0 * level as f64;
        let log_fk = s * log_f[k as usize];
        let log_rhs_coarse = if inside {
            log_fk + pre - sa * (a[l] as f64 - sum_rho_before as f64 - twol) - s * log_x(k - a[l]) - s * log_x_before
        } else {
            log_fk + pre - sa * (k as f64 - sum_rho_through as f64 - twol) - s * log_x_through
        };
        let log_rhs_fine = (k >= schedule.n1()).then(|| {
            let n_next = schedule.levels.get(level).map(|lv| lv.n).unwrap_or(u64::MAX);
            let e = if k < n_next {
                a[l] as f64 - sum_rho_before as f64 - twol
            } else {
                n_next as f64 - sum_rho_through as f64 - twol
            };
            log_fk + pre - sa * e - s * log_x_through
        });
        points.push(MassPoint { k, level, inside_target_block: inside, log_mu, log_rhs_coarse, log_rhs_fine });
        if k == a[l] + rhos[l] {
            let lv = &schedule.levels[l];
            log_nu += nu_weights(setup, lv)?[(a[l] - lv.n) as usize].ln();
            let log_diam = ifs.cylinder_log_diameter(&sample.word[..k as usize])?.mid();
            eta_lower_ratio.push((k, (log_nu + log_mu - s * log_diam).exp()));
        }
    }
    Ok(SampleMasses { seed: sample.seed, points, log_omega, log_y_block, eta_lower_ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassBoundReport {
    pub samples: usize,
    pub depth: u64,
    /// `max ln(μ / RHS)` over all samples and `k`, for each bound.
    pub max_log_ratio_coarse: f64,
    pub max_log_ratio_fine: f64,
    /// Per-level maxima of `ln(μ / RHS_coarse)`.
    pub level_max_log_ratio_coarse: Vec<f64>,
    /// `max ln(1 / (p_min ℙ(y^{A_1-1}) ∏ ℙ(Ω_j)))`, the constant the product
    /// structure predicts for the coarse bound.
    pub predicted_log_constant: f64,
    pub eta_lower_ratio_max: f64,
    pub hit_set_matches: usize,
    pub disjoint_pairs_checked: usize,
    pub disjoint_pairs_ok: usize,
}

pub fn mass_bound_report(setup: &Setup, schedule: &Schedule, samples: &[EtaSample]) -> Result<MassBoundReport> {
    let masses: Vec<SampleMasses> = samples
        .par_iter()
        .map(|smp| sample_masses(setup, schedule, smp))
        .collect::<Result<_>>()?;
    let log_pmin = setup.gibbs.log_weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut max71 = f64::NEG_INFINITY;
    let mut max72 = f64::NEG_INFINITY;
    let mut per_level: Vec<f64> = Vec::new();
    let mut predicted = f64::NEG_INFINITY;
    let mut eta_max = 0.0f64;
    for m in &masses {
        for pt in &m.points {
            let r = pt.log_mu - pt.log_rhs_coarse;
            max71 = max71.max(r);
            if per_level.len() < pt.level {
                per_level.resize(pt.level, f64::NEG_INFINITY);
            }
            per_level[pt.level - 1] = per_level[pt.level - 1].max(r);
            if let Some(r72) = pt.log_rhs_fine {
                max72 = max72.max(pt.log_mu - r72);
            }
        }
        let through: f64 = m.log_omega.iter().sum();
        predicted = predicted.max(-log_pmin - m.log_y_block - through);
        for &(_, v) in &m.eta_lower_ratio {
            eta_max = eta_max.max(v);
        }
    }
    let mut hit_set_matches = 0;
    for smp in samples {
        if smp.hits == smp.expected_hits(setup)? {
            hit_set_matches += 1;
        }
    }
    let (checked, ok) = disjointness(samples);
    Ok(MassBoundReport {
        samples: samples.len(),
        depth: samples.first().map_or(0, |s| s.word.len() as u64),
        max_log_ratio_coarse: max71,
        max_log_ratio_fine: max72,
        level_max_log_ratio_coarse: per_level,
        predicted_log_constant: predicted,
        eta_lower_ratio_max: eta_max,
        hit_set_matches,
        disjoint_pairs_checked: checked,
        disjoint_pairs_ok: ok,
    })
}

/// For pairs of samples whose visible `A`-prefixes differ, counts those whose
/// hit sets also differ.
pub fn disjointness(samples: &[EtaSample]) -> (usize, usize) {
    let mut checked = 0;
    let mut ok = 0;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            let va: Vec<u64> = a.a_prefix.iter().copied().filter(|&v| a.hits.contains(&v)).collect();
            let vb: Vec<u64> = b.a_prefix.iter().copied().filter(|&v| b.hits.contains(&v)).collect();
            if va != vb {
                checked += 1;
                if a.hits != b.hits {
                    ok += 1;
                }
            }
        }
    }
    (checked, ok)
}

/// `(∏ (1 - p_n), exp(-(1 + 1/(2(1 - max p))) Σ p_n))`.
pub fn product_lower_bound(p: &[f64]) -> (f64, f64) {
    let prod: f64 = p.iter().map(|x| 1.0 - x).product();
    let max = p.iter().cloned().fold(0.0, f64::max);
    let sum: f64 = p.iter().sum();
    (prod, (-(1.0 + 1.0 / (2.0 * (1.0 - max))) * sum).exp())
}

/// Largest number of cylinders from `Θ_r` meeting an interval of length `r`,
/// for a reflection-free 1-D similarity system.
pub fn covering_multiplicity(ifs: &IfsSpec, r: &BigRational) -> Result<Option<usize>> {
    let Some((lo, hi)) = ifs.hull_1d() else {
        return Ok(None);
    };
    let theta = crate::symbolic::theta_r(ifs, r)?;
    let mut ivs: Vec<(BigRational, BigRational)> = theta
        .words
        .iter()
        .map(|w| Ok((ifs.image(w, &[lo.clone()])?.remove(0), ifs.image(w, &[hi.clone()])?.remove(0))))
        .collect::<Result<_>>()?;
    ivs.sort();
    let mut best = 0;
    for (i, (start, _)) in ivs.iter().enumerate() {
        let end = start + r;
        let count = ivs[i..].iter().take_while(|(a, _)| *a <= end).count();
        // earlier cylinders reaching into [start, end]
        let before = ivs[..i].iter().filter(|(_, b)| *b >= *start).count();
        best = best.max(count + before);
    }
    Ok(Some(best))
}

/// `ν` level weights converted to exact rationals sum to one.
pub fn nu_sums_to_one(weights: &[BigRational]) -> bool {
    weights.iter().fold(BigRational::zero(), |acc, w| acc + w).is_one()
}

/// Exact `ℙ(Ω)` for uniform Bernoulli weights.
pub fn omega_probability_exact(setup: &Setup, omega: &OmegaSet) -> Option<BigRational> {
    let u = setup.gibbs.uniform.clone()?;
    let w = vec![u; setup.ifs().alphabet_size()];
    Some(omega.probability(&w))
}

/// `m^{-|w|}` summed over members by enumeration, exactly.
pub fn omega_count_exact(omega: &OmegaSet) -> Result<BigInt> {
    let w = vec![1.0; omega.alphabet];
    let (_, count) = omega.enumerate(&w)?;
    Ok(BigInt::from(count))
}

/// Float value of an exact rational, for reports.
pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
