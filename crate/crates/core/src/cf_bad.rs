//! Continued fractions with bounded partial quotients.
//!
//! `Bad_Q`, the numbers in `(0, 1]` whose partial quotients never exceed `Q`,
//! is the attractor of `{f_a ∘ f_b}` with `f_a(y) = 1 / (a + y)`. This module
//! provides exact continuants, the comparison and derivative bounds they
//! satisfy, the series `Σ_n ψ(n)^s Σ_{|w| = n} q_n(w)^{-2s}` with its growth
//! rate, dimension brackets for `Bad_Q`, and Gauss-map orbits of quadratic
//! irrationals.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dichotomy::Convergence;
use crate::interval::Interval;
use crate::psi::{ApproxFn, PsiError};
use crate::rational::format_rational;
use crate::thermo::log_sum_exp;

#[derive(Debug, Error)]
pub enum CfError {
    #[error("partial quotient {0} at position {1}: quotients must be >= 1")]
    ZeroQuotient(u32, usize),
    #[error("quotient {a} exceeds the bound Q = {q}")]
    AboveBound { a: u32, q: u32 },
    #[error("need 0 < k < n, got k = {k}, n = {n}")]
    BadSplit { k: usize, n: usize },
    #[error("comparison ratio {0} lies outside [1, 2]")]
    CompareViolation(String),
    #[error("Q must be at least 1")]
    ZeroBound,
    #[error("s must be finite and nonnegative, got {0}")]
    BadExponent(f64),
    #[error("{what}: {count} words exceed the enumeration limit {limit}")]
    TooLarge { what: &'static str, count: f64, limit: f64 },
    #[error("empty continued fraction")]
    Empty,
    #[error(transparent)]
    Psi(#[from] PsiError),
}

type Result<T> = std::result::Result<T, CfError>;

/// Largest number of words enumerated directly.
pub const ENUMERATION_LIMIT: f64 = 1e7;
/// Ratio bins used by the transfer recursion.
pub const RATIO_BINS: usize = 1 << 12;

fn check_word(word: &[u32]) -> Result<()> {
    match word.iter().position(|&a| a == 0) {
        Some(i) => Err(CfError::ZeroQuotient(0, i + 1)),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContinuantPair {
    pub word: Vec<u32>,
    pub p: BigInt,
    pub q: BigInt,
    pub p_prev: BigInt,
    pub q_prev: BigInt,
}

impl ContinuantPair {
    /// `p_n q_{n-1} - p_{n-1} q_n`, equal to `(-1)^{n+1}`.
    pub fn determinant(&self) -> BigInt {
        &self.p * &self.q_prev - &self.p_prev * &self.q
    }

    /// `f_{a_1} ∘ ⋯ ∘ f_{a_n}(x) = (p_{n-1} x + p_n) / (q_{n-1} x + q_n)`.
    pub fn apply(&self, x: &BigRational) -> BigRational {
        let num = BigRational::from_integer(self.p_prev.clone()) * x + BigRational::from_integer(self.p.clone());
        let den = BigRational::from_integer(self.q_prev.clone()) * x + BigRational::from_integer(self.q.clone());
        num / den
    }

    /// The derivative of the composition at `x`.
    pub fn derivative(&self, x: &BigRational) -> BigRational {
        let den = BigRational::from_integer(self.q_prev.clone()) * x + BigRational::from_integer(self.q.clone());
        let det = BigRational::from_integer(&self.p_prev * &self.q - &self.p * &self.q_prev);
        det / (&den * &den)
    }
}

/// Continuants with `p_{-1} = q_0 = 1` and `p_0 = q_{-1} = 0`.
pub fn continuants(word: &[u32]) -> Result<ContinuantPair> {
    check_word(word)?;
    let (mut p_prev, mut p) = (BigInt::one(), BigInt::zero());
    let (mut q_prev, mut q) = (BigInt::zero(), BigInt::one());
    for &a in word {
        let a = BigInt::from(a);
        let pn = &a * &p + &p_prev;
        let qn = &a * &q + &q_prev;
        p_prev = std::mem::replace(&mut p, pn);
        q_prev = std::mem::replace(&mut q, qn);
    }
    Ok(ContinuantPair { word: word.to_vec(), p, q, p_prev, q_prev })
}

/// `q_n(a_1..a_n) / (q_k(a_1..a_k) q_{n-k}(a_{k+1}..a_n))`, checked to lie in `[1, 2]`.
pub fn compare_inequality(word: &[u32], k: usize) -> Result<BigRational> {
    let n = word.len();
    if k == 0 || k >= n {
        return Err(CfError::BadSplit { k, n });
    }
    let full = continuants(word)?.q;
    let left = continuants(&word[..k])?.q;
    let right = continuants(&word[k..])?.q;
    let r = BigRational::new(full, left * right);
    if r < BigRational::one() || r > BigRational::from_integer(2.into()) {
        return Err(CfError::CompareViolation(format_rational(&r)));
    }
    Ok(r)
}

/// Whether `1/(4 q_n²) <= |(f_w)'(x)| <= 1/q_n²`.
pub fn derivative_sandwich(word: &[u32], x: &BigRational) -> Result<bool> {
    let c = continuants(word)?;
    let d = c.derivative(x).abs();
    let q2 = BigRational::from_integer(&c.q * &c.q);
    let upper = q2.recip();
    let lower = (BigRational::from_integer(4.into()) * q2).recip();
    Ok(lower <= d && d <= upper)
}

/// A word state: `ln q_n` and `r = q_{n-1} / q_n`.
#[derive(Clone, Copy, Debug)]
struct State {
    log_q: f64,
    r: f64,
}

impl State {
    const ROOT: State = State { log_q: 0.0, r: 0.0 };

    fn push(self, a: u32) -> State {
        let base = a as f64 + self.r;
        State { log_q: self.log_q + base.ln(), r: 1.0 / base }
    }
}

fn words_up_to(q: u32, n: usize) -> f64 {
    (1..=n).map(|k| (q as f64).powi(k as i32)).sum()
}

/// All states of words of length `n` over `1..=q`, ordered lexicographically.
fn states(q: u32, n: usize) -> Result<Vec<State>> {
    let count = (q as f64).powi(n as i32);
    if count > ENUMERATION_LIMIT {
        return Err(CfError::TooLarge { what: "word states", count, limit: ENUMERATION_LIMIT });
    }
    let mut cur = vec![State::ROOT];
    for _ in 0..n {
        cur = cur.iter().flat_map(|s| (1..=q).map(move |a| s.push(a))).collect();
    }
    Ok(cur)
}

/// Per-bin totals of `q^{-2s}` scaled by `e^{shift}`, with first moments in `r`.
#[derive(Clone, Debug)]
struct Bins {
    mass: Vec<f64>,
    moment: Vec<f64>,
}

impl Bins {
    fn new() -> Self {
        Bins { mass: vec![0.0; RATIO_BINS], moment: vec![0.0; RATIO_BINS] }
    }

    fn index(r: f64) -> usize {
        ((r * RATIO_BINS as f64) as usize).min(RATIO_BINS - 1)
    }

    fn add(&mut self, r: f64, w: f64) {
        let b = Self::index(r);
        self.mass[b] += w;
        self.moment[b] += w * r;
    }

    fn merge(mut self, other: &Bins) -> Bins {
        for b in 0..RATIO_BINS {
            self.mass[b] += other.mass[b];
            self.moment[b] += other.moment[b];
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelMethod {
    Enumerated,
    Binned,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InnerLevel {
    pub n: usize,
    /// Enclosure of `ln Σ_{|w| = n} q_n(w)^{-2s}`.
    pub log_inner: Interval,
    pub log_inner_est: f64,
    pub method: LevelMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BadSum {
    pub q_max: u32,
    pub s: f64,
    pub depth: usize,
    pub enumerated_up_to: usize,
    pub levels: Vec<InnerLevel>,
    /// Enclosures of `ln S_N` for `N = 1..=depth`; `None` while every term is zero.
    pub log_partial: Vec<Option<Interval>>,
    /// `ln g_n = ln I_{n+1} - ln I_n` from the central estimates.
    pub log_growth: Vec<f64>,
    /// `|g_{n+1} / g_n - 1|`.
    pub growth_rel_change: Vec<f64>,
}

impl BadSum {
    /// `ln g` at the deepest level.
    pub fn last_log_growth(&self) -> Option<f64> {
        self.log_growth.last().copied()
    }
}

/// Exact enumeration of the inner sums for `n = 1..=depth`, parallel over the
/// first quotient. Returns per-level sums scaled by `e^{2s (n-1) ln φ}` and
/// the seed bins at the last level.
fn enumerate_inner(q: u32, s: f64, depth: usize) -> (Vec<f64>, Bins) {
    let shift = |n: usize| 2.0 * s * (n as f64 - 1.0) * GOLDEN_LN;
    let parts: Vec<(Vec<f64>, Bins)> = (1..=q)
        .into_par_iter()
        .map(|a1| {
            let mut sums = vec![0.0f64; depth + 1];
            let mut bins = Bins::new();
            let mut stack = vec![(1usize, State::ROOT.push(a1))];
            while let Some((n, st)) = stack.pop() {
                let w = (shift(n) - 2.0 * s * st.log_q).exp();
                sums[n] += w;
                if n == depth {
                    bins.add(st.r, w);
                } else {
                    stack.extend((1..=q).rev().map(|a| (n + 1, st.push(a))));
                }
            }
            (sums, bins)
        })
        .collect();
    let mut sums = vec![0.0f64; depth + 1];
    let mut bins = Bins::new();
    for (ps, pb) in &parts {
        for (t, v) in sums.iter_mut().zip(ps) {
            *t += v;
        }
        bins = bins.merge(pb);
    }
    (sums, bins)
}

const GOLDEN_LN: f64 = 0.481_211_825_059_603_4;

/// Partial sums of `Σ_{n>=1} ψ(n)^s Σ_{a_1..a_n <= Q} q_n^{-2s}`.
///
/// Inner sums are enumerated while `Q^n <= 10^7` and then advanced by the
/// transfer recursion on `r = q_{n-1}/q_n` over [`RATIO_BINS`] bins. The
/// recursion carries rigorous upper and lower bounds (states placed at the
/// bin end that maximizes or minimizes all later weights) and a central
/// estimate that transports each bin's mean ratio.
pub fn bad_sum(q: u32, psi: &ApproxFn, s: f64, depth: usize) -> Result<BadSum> {
    if q == 0 {
        return Err(CfError::ZeroBound);
    }
    if !(s >= 0.0 && s.is_finite()) {
        return Err(CfError::BadExponent(s));
    }
    let mut n_enum = 0usize;
    while n_enum < depth && words_up_to(q, n_enum + 1) <= 1.5 * ENUMERATION_LIMIT {
        n_enum += 1;
    }
    let n_enum = n_enum.max(1).min(depth.max(1));
    let (sums, seed) = enumerate_inner(q, s, n_enum);
    let eps_enum = |n: usize| (q as f64).powi(n as i32) * 8.0 * f64::EPSILON + 1e-13;
    let mut levels = Vec::with_capacity(depth);
    for n in 1..=n_enum.min(depth) {
        let base = sums[n].ln() - 2.0 * s * (n as f64 - 1.0) * GOLDEN_LN;
        let e = eps_enum(n);
        levels.push(InnerLevel {
            n,
            log_inner: Interval::new(base - e, base + e),
            log_inner_est: base,
            method: LevelMethod::Enumerated,
        });
    }
    if depth > n_enum {
        binned_levels(q, s, n_enum, &seed, depth, &mut levels);
    }
    let mut log_partial = Vec::with_capacity(depth);
    let mut acc: Option<Interval> = None;
    for lv in &levels {
        let term = match psi.log_value(lv.n as u64)? {
            None if s > 0.0 => None,
            None => Some(lv.log_inner),
            Some(l) => Some(l * Interval::point(s) + lv.log_inner),
        };
        if let Some(t) = term {
            acc = Some(match acc {
                None => t,
                Some(a) => log_sum_exp([a, t].into_iter()),
            });
        }
        log_partial.push(acc);
    }
    let log_growth: Vec<f64> = levels.windows(2).map(|w| w[1].log_inner_est - w[0].log_inner_est).collect();
    let growth_rel_change = log_growth.windows(2).map(|w| (w[1] - w[0]).exp_m1().abs()).collect();
    Ok(BadSum { q_max: q, s, depth, enumerated_up_to: n_enum.min(depth), levels, log_partial, log_growth, growth_rel_change })
}

fn binned_levels(q: u32, s: f64, n_enum: usize, seed: &Bins, depth: usize, levels: &mut Vec<InnerLevel>) {
    let nb = RATIO_BINS;
    let width = 1.0 / nb as f64;
    // (target bin, weight) for the upper and lower transports
    let mut up_move = Vec::with_capacity(nb * q as usize);
    let mut lo_move = Vec::with_capacity(nb * q as usize);
    for b in 0..nb {
        let (lo, hi) = (b as f64 * width, (b + 1) as f64 * width);
        for a in 1..=q {
            let a = a as f64;
            up_move.push((Bins::index((1.0 / (a + hi)).next_down()), (a + lo).powf(-2.0 * s) * (1.0 + 4.0 * f64::EPSILON)));
            lo_move.push((Bins::index((1.0 / (a + lo)).next_up()), (a + hi).powf(-2.0 * s) * (1.0 - 4.0 * f64::EPSILON)));
        }
    }
    let shift0 = -2.0 * s * (n_enum as f64 - 1.0) * GOLDEN_LN;
    let slack = (q as f64).powi(n_enum as i32) * 8.0 * f64::EPSILON + 1e-13;
    let norm = |v: &mut Vec<f64>| -> f64 {
        let t: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= t);
        t.ln()
    };
    let mut up = seed.mass.clone();
    let mut lo = seed.mass.clone();
    let mut cm = seed.mass.clone();
    let mut cr = seed.moment.clone();
    let (mut up_log, mut lo_log, mut c_log) = (shift0 + slack, shift0 - slack, shift0);
    up_log += norm(&mut up);
    lo_log += norm(&mut lo);
    let t = cm.iter().sum::<f64>();
    cm.iter_mut().for_each(|x| *x /= t);
    cr.iter_mut().for_each(|x| *x /= t);
    c_log += t.ln();
    for n in n_enum + 1..=depth {
        let mut nu = vec![0.0f64; nb];
        let mut nl = vec![0.0f64; nb];
        let mut nm = vec![0.0f64; nb];
        let mut nr = vec![0.0f64; nb];
        for b in 0..nb {
            let (u, l, m) = (up[b], lo[b], cm[b]);
            for a in 0..q as usize {
                if u > 0.0 {
                    let (t, w) = up_move[b * q as usize + a];
                    nu[t] += u * w;
                }
                if l > 0.0 {
                    let (t, w) = lo_move[b * q as usize + a];
                    nl[t] += l * w;
                }
                if m > 0.0 {
                    let base = (a + 1) as f64 + cr[b] / m;
                    let w = m * base.powf(-2.0 * s);
                    let r2 = 1.0 / base;
                    let t = Bins::index(r2);
                    nm[t] += w;
                    nr[t] += w * r2;
                }
            }
        }
        up_log += norm(&mut nu) + 4.0 * f64::EPSILON * nb as f64;
        lo_log += norm(&mut nl) - 4.0 * f64::EPSILON * nb as f64;
        let t: f64 = nm.iter().sum();
        nm.iter_mut().for_each(|x| *x /= t);
        nr.iter_mut().for_each(|x| *x /= t);
        c_log += t.ln();
        up = nu;
        lo = nl;
        cm = nm;
        cr = nr;
        levels.push(InnerLevel {
            n,
            log_inner: Interval::new(lo_log, up_log),
            log_inner_est: c_log,
            method: LevelMethod::Binned,
        });
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimensionBracket {
    pub q_max: u32,
    pub depth: usize,
    /// Roots of `Σ (4 q_n²)^{-t} = 1` and `Σ q_n^{-2t} = 1`.
    pub sandwich: Interval,
    /// Certified by the ratio `h_{n+1} / h_n` of transfer-operator iterates.
    pub transfer: Option<Interval>,
    pub bracket: Interval,
    /// Root of `Σ_{|w|=n+1} q^{-2t} = Σ_{|w|=n} q^{-2t}`.
    pub refinement: f64,
}

impl DimensionBracket {
    pub fn width(&self) -> f64 {
        self.bracket.width()
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    // f decreasing with f(lo) > 0 > f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn log_z(states: &[State], t: f64) -> f64 {
    let m = states.iter().map(|s| s.log_q).fold(f64::INFINITY, f64::min);
    let sum: f64 = states.iter().map(|s| (-2.0 * t * (s.log_q - m)).exp()).sum();
    sum.ln() - 2.0 * t * m
}

/// Ratio-binned weights of one level, with exact per-bin ratio ranges.
struct RatioProfile {
    bins: Vec<(f64, f64, f64)>, // (mass, r_min, r_max)
    log_scale: f64,
}

const PROFILE_BINS: usize = 1024;
const PROFILE_CELLS: usize = 1024;

impl RatioProfile {
    fn new(states: &[State], t: f64) -> Self {
        let m = states.iter().map(|s| s.log_q).fold(f64::INFINITY, f64::min);
        let mut bins = vec![(0.0f64, f64::INFINITY, f64::NEG_INFINITY); PROFILE_BINS];
        for s in states {
            let b = ((s.r * PROFILE_BINS as f64) as usize).min(PROFILE_BINS - 1);
            let e = &mut bins[b];
            e.0 += (-2.0 * t * (s.log_q - m)).exp();
            e.1 = e.1.min(s.r);
            e.2 = e.2.max(s.r);
        }
        bins.retain(|e| e.0 > 0.0);
        RatioProfile { bins, log_scale: -2.0 * t * m }
    }

    /// `ln h(x)` enclosure at grid points `x_g = g / cells`: `(with r_max, with r_min)`.
    fn grid(&self, t: f64) -> Vec<(f64, f64)> {
        (0..=PROFILE_CELLS)
            .map(|g| {
                let x = g as f64 / PROFILE_CELLS as f64;
                let (mut lo, mut hi) = (0.0f64, 0.0f64);
                for &(m, rmin, rmax) in &self.bins {
                    lo += m * (1.0 + rmax * x).powf(-2.0 * t);
                    hi += m * (1.0 + rmin * x).powf(-2.0 * t);
                }
                (lo.ln() + self.log_scale, hi.ln() + self.log_scale)
            })
            .collect()
    }
}

/// Bounds on `ln λ(t)` from `inf/sup_x h_{n+1}(x) / h_n(x)`, where
/// `h_n(x) = Σ_{|w|=n} |f_w'(x)|^t` and `λ(t)` is the leading eigenvalue of
/// the transfer operator.
fn log_eigen_bounds(short: &[State], long: &[State], t: f64) -> Interval {
    let a = RatioProfile::new(short, t).grid(t);
    let b = RatioProfile::new(long, t).grid(t);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    // h is decreasing in x, so on [x_g, x_{g+1}] it lies between the
    // r_max value at x_{g+1} and the r_min value at x_g.
    for g in 0..PROFILE_CELLS {
        let num_lo = b[g + 1].0;
        let num_hi = b[g].1;
        let den_lo = a[g + 1].0;
        let den_hi = a[g].1;
        lo = lo.min(num_lo - den_hi);
        hi = hi.max(num_hi - den_lo);
    }
    let slack = 1e-12 + 1e-12 * t;
    Interval::new(lo - slack, hi + slack)
}

fn level_states(q: u32, depth: usize) -> Result<(Vec<State>, Vec<State>)> {
    let count = (q as f64).powi(depth as i32 + 1);
    if count > ENUMERATION_LIMIT {
        return Err(CfError::TooLarge { what: "dimension bracket", count, limit: ENUMERATION_LIMIT });
    }
    let short = states(q, depth)?;
    let long: Vec<State> = short.iter().flat_map(|s| (1..=q).map(move |a| s.push(a))).collect();
    Ok((short, long))
}

/// Bracket for `dim Bad_Q` from words of length `depth` and `depth + 1`.
pub fn badq_dimension(q: u32, depth: usize) -> Result<DimensionBracket> {
    if q == 0 {
        return Err(CfError::ZeroBound);
    }
    if q == 1 {
        let z = Interval::new(0.0, 0.0);
        return Ok(DimensionBracket { q_max: 1, depth, sandwich: z, transfer: Some(z), bracket: z, refinement: 0.0 });
    }
    let depth = depth.max(1);
    let (short, long) = level_states(q, depth)?;
    let ln4 = 4f64.ln();
    let lo = bisect(|t| log_z(&short, t) - t * ln4, 0.0, 2.0);
    let hi = bisect(|t| log_z(&short, t), 0.0, 2.0).min(1.0);
    let sandwich = Interval::new((lo - 1e-9).max(0.0), (hi + 1e-9).min(1.0));
    let refinement = bisect(|t| log_z(&long, t) - log_z(&short, t), 0.0, 2.0);

    let certifies_upper = |t: f64| log_eigen_bounds(&short, &long, t).hi < 0.0;
    let certifies_lower = |t: f64| log_eigen_bounds(&short, &long, t).lo > 0.0;
    let steps = [0.016, 0.008, 0.004, 0.002, 0.001, 0.0005, 0.00025];
    let mut t_hi = None;
    for d in steps {
        if certifies_upper(refinement + d) {
            t_hi = Some(refinement + d);
        } else {
            break;
        }
    }
    let mut t_lo = None;
    for d in steps {
        if certifies_lower(refinement - d) {
            t_lo = Some(refinement - d);
        } else {
            break;
        }
    }
    let transfer = match (t_lo, t_hi) {
        (Some(a), Some(b)) => Some(Interval::new(a, b)),
        _ => None,
    };
    let bracket = transfer.and_then(|t| t.intersect(&sandwich)).unwrap_or(sandwich);
    Ok(DimensionBracket { q_max: q, depth, sandwich, transfer, bracket, refinement })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvenOdd {
    pub psi_even: serde_json::Value,
    pub psi_odd: serde_json::Value,
    /// `ln Σ_{a<=Q} q_1(a)^{-2s}`, the factor relating odd and even levels.
    pub log_odd_factor: f64,
    /// Exponent gaps of the two subseries against the second-level system.
    pub gap_even: Interval,
    pub gap_odd: Interval,
    pub agree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BadVerdict {
    pub q_max: u32,
    pub s: f64,
    pub depth: usize,
    pub psi: serde_json::Value,
    /// Enclosure of `ln g`, the growth rate of the inner sums.
    pub log_growth: Interval,
    /// `ln g - s α(ψ)`; the series diverges when positive.
    pub exponent_gap: Interval,
    pub convergence: Convergence,
    /// `"zero"`, `"infinite"` or `"undecided"`.
    pub hs_measure: &'static str,
    pub even_odd: Option<EvenOdd>,
    /// Gap width needed to decide, when inconclusive.
    pub required_precision: Option<f64>,
    pub provenance: String,
}

impl BadVerdict {
    pub fn is_decided(&self) -> bool {
        self.convergence != Convergence::Inconclusive
    }
}

/// Enclosure of `ln g(s) = ln λ(s)`.
pub fn log_growth_bracket(q: u32, s: f64, depth: usize) -> Result<Interval> {
    if q == 0 {
        return Err(CfError::ZeroBound);
    }
    if q == 1 {
        return Ok(Interval::point(-2.0 * s) * Interval::new(GOLDEN_LN.next_down(), GOLDEN_LN.next_up()));
    }
    let (short, long) = level_states(q, depth.max(1))?;
    let n = depth.max(1) as f64;
    let z = log_z(&short, s);
    // sub- and super-multiplicativity of the sums
    let sandwich = Interval::new((z - 2.0 * s * 2f64.ln()) / n - 1e-12, z / n + 1e-12);
    let cw = log_eigen_bounds(&short, &long, s);
    Ok(cw.intersect(&sandwich).unwrap_or(cw))
}

/// Decides the series `Σ_n Σ_{a_i <= Q} ψ(n)^s / q_n^{2s}`.
pub fn bad_dichotomy(q: u32, psi: &ApproxFn, s: f64, depth: usize) -> Result<BadVerdict> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(CfError::BadExponent(s));
    }
    let log_g = log_growth_bracket(q, s, depth)?;
    let sv = Interval::point(s);
    let base = |gap: Interval, conv: Convergence, why: String, even_odd: Option<EvenOdd>, req: Option<f64>| BadVerdict {
        q_max: q,
        s,
        depth,
        psi: psi.to_json(),
        log_growth: log_g,
        exponent_gap: gap,
        convergence: conv,
        hs_measure: match conv.diverges() {
            Some(true) => "infinite",
            Some(false) => "zero",
            None => "undecided",
        },
        even_odd,
        required_precision: req,
        provenance: why,
    };
    match psi {
        ApproxFn::SuperExp { .. } => {
            let conv = if s == 0.0 { Convergence::Diverges } else { Convergence::Converges };
            let gap = Interval::point(if s == 0.0 { f64::INFINITY } else { f64::NEG_INFINITY });
            Ok(base(gap, conv, "analytic: ψ decays super-exponentially".into(), None, None))
        }
        ApproxFn::Table(_) => Ok(base(
            Interval::new(f64::NEG_INFINITY, f64::INFINITY),
            Convergence::Inconclusive,
            "a finite table does not determine the series".into(),
            None,
            None,
        )),
        ApproxFn::ExpPoly { beta, alpha, .. } => {
            let gap = log_g - sv * alpha.interval();
            let even = psi.subsample(0)?;
            let odd = psi.subsample(1)?;
            let second = log_g.scale(2.0);
            let gap_even = second - sv * alpha.interval().scale(2.0);
            let gap_odd = gap_even;
            let odd_factor: f64 = (1..=q).map(|a| (a as f64).powf(-2.0 * s)).sum();
            let sign = |g: &Interval| if g.lo > 0.0 { 1 } else if g.hi < 0.0 { -1 } else { 0 };
            let even_odd = EvenOdd {
                psi_even: even.to_json(),
                psi_odd: odd.to_json(),
                log_odd_factor: odd_factor.ln(),
                gap_even,
                gap_odd,
                agree: sign(&gap_even) == sign(&gap) && sign(&gap_odd) == sign(&gap),
            };
            let (conv, why, req) = if gap.lo > 0.0 {
                (Convergence::Diverges, format!("analytic: ln g - sα >= {:.6e} > 0", gap.lo), None)
            } else if gap.hi < 0.0 {
                (Convergence::Converges, format!("analytic: ln g - sα <= {:.6e} < 0", gap.hi), None)
            } else if alpha.is_zero() && !beta.is_zero() && gap.lo > -1e-300 {
                (Convergence::Inconclusive, "critical exponent with polynomial factor".into(), Some(gap.width()))
            } else {
                let need = gap.mid().abs().max(f64::MIN_POSITIVE);
                (
                    Convergence::Inconclusive,
                    format!("ln g - sα encloses 0 in [{:.6e}, {:.6e}]", gap.lo, gap.hi),
                    Some(need),
                )
            };
            Ok(base(gap, conv, why, Some(even_odd), req))
        }
    }
}

/// An eventually periodic continued fraction `[prefix, period, period, …]`.
/// An empty period describes a rational number.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CfSpec {
    pub prefix: Vec<u32>,
    pub period: Vec<u32>,
}

impl CfSpec {
    pub fn new(prefix: Vec<u32>, period: Vec<u32>) -> Result<Self> {
        check_word(&prefix)?;
        check_word(&period)?;
        if prefix.is_empty() && period.is_empty() {
            return Err(CfError::Empty);
        }
        Ok(CfSpec { prefix, period })
    }

    /// `a_n` for `n >= 1`, `None` past the end of a finite expansion.
    pub fn quotient(&self, n: usize) -> Option<u32> {
        let i = n.checked_sub(1)?;
        if i < self.prefix.len() {
            return Some(self.prefix[i]);
        }
        if self.period.is_empty() {
            return None;
        }
        Some(self.period[(i - self.prefix.len()) % self.period.len()])
    }

    pub fn max_quotient(&self) -> u32 {
        self.prefix.iter().chain(&self.period).copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitPoint {
    pub k: usize,
    /// `a_{k+1} = ⌊1 / T^k(x)⌋`, absent once the orbit reaches 0.
    pub quotient: Option<u32>,
    /// `T^k(x)` lies between these consecutive convergents.
    #[serde(serialize_with = "crate::report::ser_rational")]
    pub lo: BigRational,
    #[serde(serialize_with = "crate::report::ser_rational")]
    pub hi: BigRational,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussOrbit {
    pub spec: CfSpec,
    pub points: Vec<OrbitPoint>,
    pub terminated: bool,
}

/// `T^k(x)` for `k = 0..n`, by shifting the expansion.
pub fn gauss_orbit(x: &CfSpec, n: usize, terms: usize) -> Result<GaussOrbit> {
    let terms = terms.max(2);
    let mut points = Vec::new();
    let mut terminated = false;
    for k in 0..n {
        let tail: Vec<u32> = (k + 1..).map_while(|i| x.quotient(i)).take(terms + 1).collect();
        if tail.is_empty() {
            let z = BigRational::zero();
            points.push(OrbitPoint { k, quotient: None, lo: z.clone(), hi: z, exact: true });
            terminated = true;
            break;
        }
        let exact = tail.len() <= terms;
        let (lo, hi) = if exact {
            let v = continuants(&tail)?;
            let r = BigRational::new(v.p, v.q);
            (r.clone(), r)
        } else {
            let a = continuants(&tail[..terms - 1])?;
            let b = continuants(&tail[..terms])?;
            let ra = BigRational::new(a.p, a.q);
            let rb = BigRational::new(b.p, b.q);
            if ra <= rb { (ra, rb) } else { (rb, ra) }
        };
        points.push(OrbitPoint { k, quotient: Some(tail[0]), lo, hi, exact });
    }
    Ok(GaussOrbit { spec: x.clone(), points, terminated })
}

/// The value of a purely periodic expansion `[τ, τ, …]`.
pub fn periodic_value(period: &[u32]) -> Result<f64> {
    if period.is_empty() {
        return Err(CfError::Empty);
    }
    let c = continuants(period)?;
    // y = (p_{m-1} y + p_m) / (q_{m-1} y + q_m)
    let f = |v: &BigInt| Interval::from_rational(&BigRational::from_integer(v.clone())).mid();
    let (a, b, c0) = (f(&c.q_prev), f(&c.q) - f(&c.p_prev), -f(&c.p));
    Ok(if a == 0.0 { -c0 / b } else { (-b + (b * b - 4.0 * a * c0).sqrt()) / (2.0 * a) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionEstimate {
    pub q_max: u32,
    pub samples: usize,
    pub depth: usize,
    /// Range of `diam(f_w(Bad_Q)) · q_n(w)²` over the sampled words.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `max(ratio_max, 1 / ratio_min)`.
    pub k: f64,
}

/// Empirical distortion constant from random cylinders of length `1..=depth`.
pub fn empirical_distortion(q: u32, samples: usize, depth: usize, seed: u64) -> Result<Option<DistortionEstimate>> {
    if q == 0 {
        return Err(CfError::ZeroBound);
    }
    if q == 1 {
        return Ok(None);
    }
    let x_min = periodic_value(&[q, 1])?;
    let x_max = periodic_value(&[1, q])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..samples {
        let n = rng.gen_range(1..=depth.max(1));
        let word: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=q)).collect();
        let mut st = State::ROOT;
        for &a in &word {
            st = st.push(a);
        }
        // diam(f_w([x_min, x_max])) · q² = (x_max - x_min) / ((1 + r x_max)(1 + r x_min))
        let ratio = (x_max - x_min) / ((1.0 + st.r * x_max) * (1.0 + st.r * x_min));
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    Ok(Some(DistortionEstimate { q_max: q, samples, depth, ratio_min: lo, ratio_max: hi, k: hi.max(1.0 / lo) }))
}

/// Whether every quotient of `word` is at most `q`.
pub fn within_bound(word: &[u32], q: u32) -> Result<()> {
    check_word(word)?;
    match word.iter().find(|&&a| a > q) {
        Some(&a) => Err(CfError::AboveBound { a, q }),
        None => Ok(()),
    }
}

/// Whether `x` is a positive rational strictly inside `(0, 1)`.
fn unit_open(x: &BigRational) -> bool {
    x.is_positive() && x < &BigRational::one()
}

/// One Gauss-map step on an exact rational.
pub fn gauss_step(x: &BigRational) -> BigRational {
    if x.is_zero() {
        return BigRational::zero();
    }
    let inv = x.recip();
    &inv - inv.floor()
}

/// The Gauss-map orbit of a rational, used as an exact cross-check.
pub fn rational_orbit(x: &BigRational, n: usize) -> Vec<BigRational> {
    let mut out = vec![x.clone()];
    let mut cur = x.clone();
    for _ in 1..n {
        if !unit_open(&cur) {
            break;
        }
        cur = gauss_step(&cur);
        out.push(cur.clone());
    }
    out
}
