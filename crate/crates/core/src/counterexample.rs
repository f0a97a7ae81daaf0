//! Counterexamples for inhomogeneous contraction ratios.
//!
//! [`kl_certificate`] checks the relative-entropy identity that rules out
//! comparing `W(x, Ψ^{s/d})` with a `d`-dimensional limsup set, and
//! [`witness_report`] builds an explicit point of `W(x, Ψ̄^{d/s})` that is not
//! in `W(x, Ψ)`, verifying the defining inequalities level by level.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::ifs::{IfsError, IfsSpec, SimilarityMap, Symbol};
use crate::interval::{ln_rational, Interval};
use crate::psi::{ApproxFn, PsiError, Real};
use crate::thermo::{kl_divergence, KlReport, PressureProfile, ThermoError};

#[derive(Debug, Error)]
pub enum CounterexampleError {
    #[error(transparent)]
    Ifs(#[from] IfsError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Psi(#[from] PsiError),
    #[error("all contraction ratios are equal; the construction needs two distinct ratios")]
    UniformRatios,
    #[error("the counterexample needs a similarity system")]
    NotSimilarity,
    #[error("strong separation is not certified for this system")]
    NoSeparation,
    #[error("the system must be normalized to diam(X) = 1, got {0}")]
    NotNormalized(String),
    #[error("α = {alpha} must lie in (0, {d})")]
    AlphaOutOfRange { alpha: f64, d: f64 },
    #[error("ψ has shrinking rate {found}, expected {expected}")]
    RateMismatch { found: f64, expected: f64 },
    #[error("ψ̄ must have shrinking rate 0, found {0}")]
    PsibarRate(f64),
    #[error("level {k}: the ceiling in ℓ_k is not determined by the enclosure {lo}..{hi}")]
    AmbiguousCeiling { k: usize, lo: f64, hi: f64 },
    #[error("need 1 <= k_max and n_1 >= 1, got {0}")]
    BadLevels(String),
    #[error("level {k}: ℓ_k exceeds the 64-bit index range")]
    Overflow { k: usize },
}

type Result<T> = std::result::Result<T, CounterexampleError>;

#[derive(Clone, Debug)]
pub struct CounterexampleConfig {
    pub ifs: IfsSpec,
    pub alpha: Real,
    pub psi: ApproxFn,
    pub psibar: ApproxFn,
}

impl CounterexampleConfig {
    /// Defaults `ψ(n) = e^{-αn}` and `ψ̄(n) = n^{-1/d}`; maps are re-sorted by
    /// decreasing ratio so that symbol 0 carries the largest ratio.
    pub fn new(ifs: &IfsSpec, alpha: Real) -> Result<Self> {
        let ifs = sort_by_ratio(ifs)?;
        let d = PressureProfile::new(&ifs).dimension()?.value;
        let psi = ApproxFn::ExpPoly { c: BigRational::one(), beta: Real::Exact(BigRational::zero()), alpha: alpha.clone() };
        let psibar = ApproxFn::ExpPoly { c: BigRational::one(), beta: Real::Float(1.0 / d), alpha: Real::Exact(BigRational::zero()) };
        Ok(CounterexampleConfig { ifs, alpha, psi, psibar })
    }

    pub fn with_psi(mut self, psi: ApproxFn) -> Self {
        self.psi = psi;
        self
    }

    pub fn with_psibar(mut self, psibar: ApproxFn) -> Self {
        self.psibar = psibar;
        self
    }

    fn validate(&self) -> Result<f64> {
        if !self.ifs.is_similarity() {
            return Err(CounterexampleError::NotSimilarity);
        }
        if self.ifs.all_ratios_equal() {
            return Err(CounterexampleError::UniformRatios);
        }
        let d = PressureProfile::new(&self.ifs).dimension()?.value;
        let alpha = self.alpha.value();
        if !(alpha > 0.0 && alpha < d) {
            return Err(CounterexampleError::AlphaOutOfRange { alpha, d });
        }
        let rate = self.psi.shrinking_rate();
        if !rate.interval().overlaps(&self.alpha.interval()) && (rate.value() - alpha).abs() > 1e-12 {
            return Err(CounterexampleError::RateMismatch { found: rate.value(), expected: alpha });
        }
        let bar = self.psibar.shrinking_rate().value();
        if bar.abs() > 1e-12 {
            return Err(CounterexampleError::PsibarRate(bar));
        }
        Ok(d)
    }
}

/// The same system with maps ordered by decreasing ratio.
pub fn sort_by_ratio(ifs: &IfsSpec) -> Result<IfsSpec> {
    if !ifs.is_similarity() {
        return Err(CounterexampleError::NotSimilarity);
    }
    let mut maps: Vec<SimilarityMap> = ifs.maps()?.to_vec();
    maps.sort_by(|a, b| b.ratio.cmp(&a.ratio));
    let diam = ifs.diam_exact().cloned().ok_or_else(|| CounterexampleError::NotNormalized("inexact".into()))?;
    Ok(IfsSpec::similarity(maps, diam)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KlCertificate {
    pub kl: KlReport,
    /// `(s - d) χ + s α > 0`, certified with margin.
    pub identity_positive: bool,
    /// `Σ a_i^d`, which is 1 at the similarity dimension.
    pub lambda_total: f64,
    /// `Σ_{n>=1} e^{-n D_KL / 2} = 1 / (e^{D_KL/2} - 1)`.
    pub series_value: f64,
    /// Direct summation until the terms drop below `1e-18` of the total.
    pub series_partial: f64,
    pub series_terms: u64,
}

pub fn kl_certificate(cfg: &CounterexampleConfig) -> Result<KlCertificate> {
    let d = cfg.validate()?;
    let alpha = cfg.alpha.value();
    let s = PressureProfile::new(&cfg.ifs).hv_exponent(alpha)?.value;
    let kl = kl_divergence(&cfg.ifs, alpha, s)?;
    let lambda_total: f64 = cfg.ifs.ratios_f64()?.iter().map(|a| a.powf(d)).sum();
    let identity_positive = kl.identity_rhs > 1e3 * kl.identity_residual.max(f64::EPSILON) && kl.d_kl > 0.0;
    let (series_partial, series_terms) = w2_partial(kl.d_kl);
    Ok(KlCertificate {
        series_value: w2_series(kl.d_kl),
        series_partial,
        series_terms,
        kl,
        identity_positive,
        lambda_total,
    })
}

/// `Σ_{n>=1} e^{-nD/2}`.
pub fn w2_series(d_kl: f64) -> f64 {
    1.0 / (d_kl / 2.0).exp_m1()
}

fn w2_partial(d_kl: f64) -> (f64, u64) {
    let r = (-d_kl / 2.0).exp();
    let (mut sum, mut comp, mut term, mut n) = (0.0f64, 0.0f64, r, 0u64);
    while n < 10_000_000 && term > 1e-18 * sum.max(r) {
        // Kahan summation
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        term *= r;
        n += 1;
    }
    (sum, n)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Inequality {
    pub k: usize,
    pub name: &'static str,
    /// Log-domain enclosures of both sides.
    pub lhs: Interval,
    pub rhs: Interval,
    pub strict: bool,
    pub verdict: bool,
}

impl Inequality {
    fn new(k: usize, name: &'static str, lhs: Interval, rhs: Interval, strict: bool) -> Self {
        let verdict = if strict { lhs.certainly_lt(&rhs) } else { lhs.certainly_le(&rhs) };
        Inequality { k, name, lhs, rhs, strict, verdict }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessReport {
    pub d: Interval,
    pub s: Interval,
    pub n_seq: Vec<u64>,
    pub l_seq: Vec<u64>,
    /// Unrounded enclosures of the expressions inside the ceilings.
    pub l_raw: Vec<Interval>,
    pub l_positive: bool,
    /// `n_k + ℓ_k < n_{k+1}` for every computed pair.
    pub gaps_ok: bool,
    /// `Σ_{i<k} ℓ_i / n_k` per level.
    pub l_share: Vec<f64>,
    pub l_share_decreasing: bool,
    pub checked_levels: usize,
    pub inequalities: Vec<Inequality>,
    /// `P'(d) = Σ a_i^d ln a_i` against `ln a_1`.
    pub p_prime_d: Interval,
    pub log_a1: Interval,
    pub p_prime_below_log_a1: bool,
    /// `P(s) - P(d) - (s - d) P'(d)`, nonnegative by convexity.
    pub convexity_gap: f64,
    pub convexity_ok: bool,
    pub word: Vec<Symbol>,
    pub all_verified: bool,
}

/// `n_k`: explicit values, or `n_1 · g^{k-1}` pushed up when needed to keep
/// `n_k + ℓ_k < n_{k+1}`.
#[derive(Clone, Debug, PartialEq)]
pub enum LevelChoice {
    Explicit(Vec<u64>),
    Geometric { n1: u64, growth: u64 },
}

impl Default for LevelChoice {
    fn default() -> Self {
        LevelChoice::Explicit(vec![100, 100_000, 100_000_000_000])
    }
}

fn ratio_log(ifs: &IfsSpec, i: Symbol) -> Result<Interval> {
    Ok(ln_rational(ifs.ratio(i)?))
}

/// Enclosure of `ln |π(u …) - x|` where `u` is a known prefix and `x` the
/// fixed point of map 1, on the line, and whether the distance is at most
/// `diam(X)` exactly.
fn log_tail_distance(ifs: &IfsSpec, prefix: &[Symbol], delta: &BigRational) -> Result<(Interval, bool)> {
    let x = ifs.fixed_point(1)?;
    let Some((lo, hi)) = ifs.hull_1d() else {
        // SSC alone: the first symbols differ, so δ <= distance <= diam.
        return Ok((Interval::new(ln_rational(delta).lo, ifs.diam().ln().hi), true));
    };
    let diam = &hi - &lo;
    let a = ifs.image(prefix, &[lo])?.remove(0);
    let b = ifs.image(prefix, &[hi])?.remove(0);
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let x = &x[0];
    let (near, far) = if x > &b {
        (x - &b, x - &a)
    } else if x < &a {
        (&a - x, &b - x)
    } else {
        (BigRational::zero(), (x - &a).max(&b - x))
    };
    let near = if near < *delta { delta.clone() } else { near };
    let within = far <= diam;
    Ok((Interval::new(ln_rational(&near).lo, ln_rational(&far).hi), within))
}

/// The witness word of the second counterexample.
///
/// Positions are 1-based: `i_j = 1` (symbol index 1) for `n_k <= j <= n_k + ℓ_k`
/// and symbol 0 elsewhere. Levels are checked for `k <= k_max`.
pub fn witness_report(cfg: &CounterexampleConfig, levels: &LevelChoice, depth: usize, k_max: usize) -> Result<WitnessReport> {
    let d_root = cfg.validate()?;
    let ifs = &cfg.ifs;
    if !ifs.diam_exact().is_some_and(|r| r.is_one()) {
        return Err(CounterexampleError::NotNormalized(format!("{:?}", ifs.diam())));
    }
    let sep = ifs.check_separation();
    let delta = sep.delta.ok_or(CounterexampleError::NoSeparation)?;
    if k_max == 0 {
        return Err(CounterexampleError::BadLevels("k_max = 0".into()));
    }
    let profile = PressureProfile::new(ifs);
    let dr = profile.dimension()?;
    let sr = profile.hv_exponent(cfg.alpha.value())?;
    let d = Interval::new(dr.lo, dr.hi);
    let s = Interval::new(sr.lo, sr.hi);
    let la1 = ratio_log(ifs, 0)?;
    let la2 = ratio_log(ifs, 1)?;
    let excess = d / s - Interval::point(1.0);
    let ratio = la1 / la2;

    let mut n_seq: Vec<u64> = Vec::new();
    let mut l_seq: Vec<u64> = Vec::new();
    let mut l_raw = Vec::new();
    let mut inequalities = Vec::new();
    let mut l_sum: u64 = 0;
    // symbol-1 count of i|_{n_k}
    let mut twos_before: u64 = 0;
    for k in 1..=k_max {
        let n = match levels {
            LevelChoice::Explicit(v) => match v.get(k - 1) {
                Some(&n) => n,
                None => return Err(CounterexampleError::BadLevels(format!("{} levels given, k_max = {k_max}", v.len()))),
            },
            LevelChoice::Geometric { n1, growth } => {
                let base = n1.saturating_mul(growth.saturating_pow(k as u32 - 1));
                match (n_seq.last(), l_seq.last()) {
                    (Some(&pn), Some(&pl)) => base.max(pn + pl + 1),
                    _ => base,
                }
            }
        };
        if n == 0 {
            return Err(CounterexampleError::BadLevels("n_k must be positive".into()));
        }
        let nf = Interval::point(n as f64);
        let lf = Interval::point(l_sum as f64);
        let log_bar = cfg.psibar.log_value(n)?.unwrap_or(Interval::point(f64::NEG_INFINITY));
        let raw = excess * ((nf - lf) * ratio + lf) + d * log_bar / (s * la2);
        let (lo, hi) = (raw.lo.ceil(), raw.hi.ceil());
        if lo != hi {
            return Err(CounterexampleError::AmbiguousCeiling { k, lo: raw.lo, hi: raw.hi });
        }
        let ell = if lo < 0.0 { 0 } else { lo.to_u64().ok_or(CounterexampleError::Overflow { k })? };
        l_raw.push(raw);

        // i|_{n_k} has twos_before + 1 symbols equal to 1 (position n_k itself).
        let c2 = twos_before + 1;
        let c1 = n - c2;
        let log_prefix = Interval::point(c2 as f64) * la2 + Interval::point(c1 as f64) * la1;
        let ones_after = match levels {
            LevelChoice::Explicit(v) => v.get(k).map(|&next| next.saturating_sub(n + ell + 1)),
            LevelChoice::Geometric { .. } => None,
        };
        let tail_len = ones_after.unwrap_or(1).clamp(1, 40) as usize;
        let tail = vec![0 as Symbol; tail_len];
        let (log_tail, tail_within) = log_tail_distance(ifs, &tail, &delta)?;
        let log_dist = Interval::point(ell as f64) * la2 + log_tail;
        let a2_pow = Interval::point(ell as f64) * la2;
        let target = excess * log_prefix + (d / s) * log_bar;
        let log_psi = cfg.psi.log_value(n)?.unwrap_or(Interval::point(f64::NEG_INFINITY));
        let log_delta = ln_rational(&delta);
        // Both points lie in the level-ℓ cylinder of symbol 1, so the common
        // factor a_2^ℓ cancels and the claim is |π(tail) - x| <= diam(X).
        let mut first = Inequality::new(k, "distance <= a_2^l", log_tail, ifs.diam().ln(), false);
        first.verdict = tail_within;
        inequalities.push(first);
        inequalities.push(Inequality::new(k, "a_2^l <= a_prefix^(d/s-1) psibar^(d/s)", a2_pow, target, false));
        inequalities.push(Inequality::new(
            k,
            "psi(n) < delta a_2^(l-1)",
            log_psi,
            log_delta + Interval::point(ell as f64 - 1.0) * la2,
            true,
        ));
        inequalities.push(Inequality::new(k, "psi(n) < distance", log_psi, log_dist, true));

        n_seq.push(n);
        l_seq.push(ell);
        l_sum = l_sum.checked_add(ell).ok_or(CounterexampleError::Overflow { k })?;
        twos_before += ell + 1;
    }

    let gaps_ok = n_seq.windows(2).zip(&l_seq).all(|(w, &l)| w[0] + l < w[1]);
    let mut prefix = 0u64;
    let l_share: Vec<f64> = n_seq
        .iter()
        .zip(&l_seq)
        .map(|(&n, &l)| {
            let r = prefix as f64 / n as f64;
            prefix += l;
            r
        })
        .collect();
    let l_share_decreasing = l_share.windows(2).skip(1).all(|w| w[1] <= w[0]);

    // Strict convexity: P'(d) < ln a_1 and P(s) >= P(d) + (s - d) P'(d).
    let logs = ifs.log_ratios()?;
    let p_prime_d = logs
        .iter()
        .fold(Interval::point(0.0), |acc, l| acc + (d * *l).exp() * *l);
    let ps = profile.pressure_value(sr.value)?;
    let pd = profile.pressure_value(d_root)?;
    let convexity_gap = ps - pd - (sr.value - d_root) * profile.pressure_derivative(d_root)?;

    let word: Vec<Symbol> = (1..=depth as u64)
        .map(|j| {
            let inside = n_seq.iter().zip(&l_seq).any(|(&n, &l)| j >= n && j <= n.saturating_add(l));
            Symbol::from(inside)
        })
        .collect();
    let p_prime_below_log_a1 = p_prime_d.certainly_lt(&la1);
    let convexity_ok = convexity_gap >= -1e-10;
    let l_positive = l_seq.iter().all(|&l| l >= 1);
    let all_verified = inequalities.iter().all(|q| q.verdict)
        && p_prime_below_log_a1
        && convexity_ok
        && l_positive
        && gaps_ok;
    Ok(WitnessReport {
        d,
        s,
        checked_levels: n_seq.len(),
        n_seq,
        l_seq,
        l_raw,
        l_positive,
        gaps_ok,
        l_share,
        l_share_decreasing,
        inequalities,
        p_prime_d,
        log_a1: la1,
        p_prime_below_log_a1,
        convexity_gap,
        convexity_ok,
        word,
        all_verified,
    })
}

/// The default system of two maps with ratios `1/2` and `1/4` on `[0, 1]`.
pub fn default_system() -> IfsSpec {
    use crate::rational::rational;
    IfsSpec::similarity(
        vec![
            SimilarityMap::new(rational(1, 2), vec![rational(0, 1)]),
            SimilarityMap::new(rational(1, 4), vec![rational(3, 4)]),
        ],
        rational(1, 1),
    )
    .expect("valid system")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rational;
    use proptest::prelude::*;

    fn cfg(alpha: (i64, i64)) -> CounterexampleConfig {
        CounterexampleConfig::new(&default_system(), Real::Exact(rational(alpha.0, alpha.1))).unwrap()
    }

    #[test]
    fn kl_identity_for_half_quarter() {
        let r = kl_certificate(&cfg((1, 5))).unwrap();
        assert!(r.kl.d_kl > 0.0);
        assert!(r.kl.identity_residual < 1e-10);
        assert!(r.identity_positive);
        assert!((r.lambda_total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn series_closed_form() {
        assert!((w2_series(2.0 * std::f64::consts::LN_2) - 1.0).abs() < 1e-15);
        let r = kl_certificate(&cfg((1, 5))).unwrap();
        assert!((r.series_partial - r.series_value).abs() < 1e-9 * r.series_value);
    }

    #[test]
    fn uniform_ratios_refused() {
        let cantor = IfsSpec::missing_digit(3, &[0, 2]).unwrap();
        let err = CounterexampleConfig::new(&cantor, Real::Exact(rational(1, 5))).and_then(|c| kl_certificate(&c));
        assert!(matches!(err, Err(CounterexampleError::UniformRatios)));
        let err = CounterexampleConfig::new(&cantor, Real::Exact(rational(1, 5)))
            .and_then(|c| witness_report(&c, &LevelChoice::default(), 10, 1));
        assert!(matches!(err, Err(CounterexampleError::UniformRatios)));
    }

    #[test]
    fn maps_are_sorted() {
        let sys = IfsSpec::similarity(
            vec![
                SimilarityMap::new(rational(1, 4), vec![rational(0, 1)]),
                SimilarityMap::new(rational(1, 2), vec![rational(1, 2)]),
            ],
            rational(1, 1),
        )
        .unwrap();
        let c = CounterexampleConfig::new(&sys, Real::Exact(rational(3, 10))).unwrap();
        assert_eq!(c.ifs.ratio(0).unwrap(), &rational(1, 2));
    }

    #[test]
    fn default_levels() {
        let w = witness_report(&cfg((3, 10)), &LevelChoice::default(), 200, 3).unwrap();
        assert_eq!(w.l_seq, vec![22, 15527, 15_507_004_767]);
        assert!(w.gaps_ok && w.l_positive && w.l_share_decreasing);
        assert!(w.p_prime_below_log_a1 && w.convexity_ok);
        assert_eq!(w.word[98], 0);
        assert!(w.word[99..=121].iter().all(|&a| a == 1));
        assert_eq!(w.word[122], 0);
        // the exclusion at k = 2, 3 has a wide margin
        for q in w.inequalities.iter().filter(|q| q.k >= 2 && q.name.starts_with("psi")) {
            assert!(q.verdict, "{q:?}");
        }
    }

    #[test]
    fn geometric_levels_respect_gaps() {
        let w = witness_report(&cfg((3, 10)), &LevelChoice::Geometric { n1: 50, growth: 10 }, 100, 4).unwrap();
        assert!(w.gaps_ok);
        assert_eq!(w.n_seq[0], 50);
    }

    proptest! {
        #[test]
        fn kl_positive_and_identity(p in 1i64..30, q in 3i64..6, alpha in 1i64..60) {
            // two maps with ratios 1/2 and p/(q·(p+1)), placed at the ends of [0, 1]
            let a2 = rational(p, q * (p + 1));
            let sys = IfsSpec::similarity(
                vec![
                    SimilarityMap::new(rational(1, 2), vec![rational(0, 1)]),
                    SimilarityMap::new(a2.clone(), vec![rational(1, 1) - a2.clone()]),
                ],
                rational(1, 1),
            ).unwrap();
            prop_assume!(!sys.all_ratios_equal());
            let d = PressureProfile::new(&sys).dimension().unwrap().value;
            let al = alpha as f64 / 100.0;
            prop_assume!(al < d);
            let c = CounterexampleConfig::new(&sys, Real::Float(al)).unwrap();
            let r = kl_certificate(&c).unwrap();
            prop_assert!(r.kl.identity_residual < 1e-10);
            prop_assert!(r.kl.d_kl > 0.0);
            let w = witness_report(&c, &LevelChoice::Geometric { n1: 40, growth: 100 }, 10, 2).unwrap();
            prop_assert!(w.p_prime_below_log_a1);
            prop_assert!(w.convexity_gap >= -1e-10);
        }
    }
}
