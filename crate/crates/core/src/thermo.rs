//! Pressure, dimension and Hill–Velani roots, Bernoulli Gibbs weights and the
//! relative-entropy identity for inhomogeneous ratios.

use num_rational::BigRational;
use num_traits::One;
use serde::Serialize;
use thiserror::Error;

use crate::ifs::{IfsError, IfsKind, IfsSpec, Symbol};
use crate::interval::Interval;
pub use crate::psi::ShrinkingRate;
use crate::psi::ApproxFn;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    #[error(transparent)]
    Ifs(#[from] IfsError),
    #[error("weights sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("s must be nonnegative and finite, got {0}")]
    BadExponent(f64),
    #[error("alpha must be nonnegative, got {0}")]
    BadAlpha(f64),
    #[error("finite-n estimate needs {words} words, above the limit {limit}")]
    TooManyWords { words: f64, limit: f64 },
}

/// Iterations of every bisection in this module.
pub const BISECTION_STEPS: usize = 200;
const ESTIMATE_WORD_LIMIT: f64 = 4e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureMode {
    ClosedForm,
    FiniteN { depth: usize },
}

#[derive(Clone, Debug)]
pub struct PressureProfile {
    ifs: IfsSpec,
    mode: PressureMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RootResult {
    pub value: f64,
    /// Final bisection bracket.
    pub lo: f64,
    pub hi: f64,
    pub residual: f64,
    /// Sign change certified by interval evaluation at both ends.
    pub certified: bool,
}

impl PressureProfile {
    /// Closed form for similarity systems, depth-`n` estimate otherwise.
    pub fn new(ifs: &IfsSpec) -> Self {
        let mode = if ifs.is_similarity() { PressureMode::ClosedForm } else { PressureMode::FiniteN { depth: 8 } };
        PressureProfile { ifs: ifs.clone(), mode }
    }

    pub fn finite_n(ifs: &IfsSpec, depth: usize) -> Self {
        PressureProfile { ifs: ifs.clone(), mode: PressureMode::FiniteN { depth: depth.max(1) } }
    }

    pub fn mode(&self) -> PressureMode {
        self.mode
    }

    pub fn ifs(&self) -> &IfsSpec {
        &self.ifs
    }

    /// Enclosure of `P(s)`. For finite-n estimates the enclosure is widened
    /// by `ln C / n` on each side.
    pub fn pressure(&self, s: f64) -> Result<Interval, ThermoError> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(ThermoError::BadExponent(s));
        }
        match (self.mode, self.ifs.kind()) {
            (PressureMode::ClosedForm, IfsKind::Similarity(_)) => {
                let logs = self.ifs.log_ratios()?;
                Ok(log_sum_exp(logs.iter().map(|l| *l * Interval::point(s))))
            }
            (PressureMode::FiniteN { depth }, _) => self.finite_n_pressure(s, depth),
            (PressureMode::ClosedForm, IfsKind::Conformal(_)) => self.finite_n_pressure(s, 8),
        }
    }

    fn finite_n_pressure(&self, s: f64, depth: usize) -> Result<Interval, ThermoError> {
        let m = self.ifs.alphabet_size();
        let words = (m as f64).powi(depth as i32);
        if words > ESTIMATE_WORD_LIMIT {
            return Err(ThermoError::TooManyWords { words, limit: ESTIMATE_WORD_LIMIT });
        }
        let sv = Interval::point(s);
        let mut terms = Vec::with_capacity(words as usize);
        let mut w = vec![0 as Symbol; depth];
        loop {
            let d = match self.ifs.kind() {
                IfsKind::Conformal(o) => o.derivative_enclosure(&w).ln(),
                IfsKind::Similarity(_) => self.ifs.cylinder_log_diameter(&w)? - self.ifs.diam().ln(),
            };
            terms.push(d * sv);
            if !increment(&mut w, m) {
                break;
            }
        }
        let n = Interval::point(depth as f64);
        let z = log_sum_exp(terms.into_iter()) / n;
        let c = Interval::point(self.ifs.distortion()).ln() / n;
        Ok(Interval::new((z - c).lo, (z + c).hi))
    }

    /// Midpoint of the pressure enclosure.
    pub fn pressure_value(&self, s: f64) -> Result<f64, ThermoError> {
        Ok(self.pressure(s)?.mid())
    }

    /// `P'(s) = Σ a_i^s ln a_i / Σ a_i^s`, similarity systems only.
    pub fn pressure_derivative(&self, s: f64) -> Result<f64, ThermoError> {
        let logs: Vec<f64> = self.ifs.log_ratios()?.iter().map(Interval::mid).collect();
        let weights: Vec<f64> = logs.iter().map(|l| (l * s).exp()).collect();
        let total: f64 = weights.iter().sum();
        Ok(weights.iter().zip(&logs).map(|(w, l)| w * l).sum::<f64>() / total)
    }

    /// Root of `P(s) - s α` for finite `α >= 0`.
    fn root(&self, alpha: f64) -> Result<RootResult, ThermoError> {
        let f = |s: f64| -> Result<Interval, ThermoError> {
            Ok(self.pressure(s)? - Interval::point(s) * Interval::point(alpha))
        };
        let mut hi = self.ifs.ambient_dim() as f64;
        while f(hi)?.mid() > 0.0 {
            hi *= 2.0;
            if hi > 1e6 {
                break;
            }
        }
        let mut lo = 0.0;
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid)?.mid() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let value = 0.5 * (lo + hi);
        // Widen until interval evaluation certifies the sign change.
        let mut step = 1e-15 * value.abs().max(1.0);
        let (mut clo, mut chi) = (lo, hi);
        let mut certified = false;
        while step < 1e-8 {
            clo = (value - step).max(0.0);
            chi = value + step;
            let left_ok = clo == 0.0 && alpha == 0.0 && f(0.0)?.lo >= 0.0 || f(clo)?.lo > 0.0;
            if left_ok && f(chi)?.hi < 0.0 {
                certified = true;
                break;
            }
            step *= 2.0;
        }
        if !certified {
            (clo, chi) = (lo, hi);
        }
        Ok(RootResult { value, lo: clo, hi: chi, residual: f(value)?.mid().abs(), certified })
    }

    /// `d` with `P(d) = 0`.
    pub fn dimension(&self) -> Result<RootResult, ThermoError> {
        self.root(0.0)
    }

    /// `s` with `P(s) = s α`; zero for `α = ∞`.
    pub fn hv_exponent(&self, alpha: f64) -> Result<RootResult, ThermoError> {
        if alpha.is_nan() || alpha < 0.0 {
            return Err(ThermoError::BadAlpha(alpha));
        }
        if alpha.is_infinite() {
            return Ok(RootResult { value: 0.0, lo: 0.0, hi: 0.0, residual: 0.0, certified: true });
        }
        self.root(alpha)
    }
}

fn increment(w: &mut [Symbol], m: usize) -> bool {
    for s in w.iter_mut().rev() {
        if (*s as usize) + 1 < m {
            *s += 1;
            return true;
        }
        *s = 0;
    }
    false
}

/// `ln Σ e^{x_i}` for interval arguments.
pub fn log_sum_exp(xs: impl Iterator<Item = Interval>) -> Interval {
    let xs: Vec<Interval> = xs.collect();
    let shift = xs.iter().map(|x| x.hi).fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Interval::point(f64::NEG_INFINITY);
    }
    let sh = Interval::point(shift);
    let total = xs.iter().fold(Interval::point(0.0), |acc, x| acc + (*x - sh).exp());
    total.ln() + sh
}

/// The shrinking rate `α(ψ)`.
pub fn shrinking_rate(psi: &ApproxFn) -> ShrinkingRate {
    psi.shrinking_rate()
}

/// Bernoulli weights `w_i = e^{-α s} a_i^s`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GibbsWeights {
    pub alpha: f64,
    pub s: f64,
    pub log_weights: Vec<f64>,
    /// `1/m` when all ratios agree, so masses are exact rationals.
    #[serde(serialize_with = "crate::report::ser_opt_rational")]
    pub uniform: Option<BigRational>,
    /// Distortion constant of the measure (1 for similarity systems).
    pub constant: f64,
}

impl GibbsWeights {
    pub fn new(ifs: &IfsSpec, alpha: f64, s: f64) -> Result<Self, ThermoError> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(ThermoError::BadExponent(s));
        }
        let logs = ifs.log_ratios()?;
        let log_weights: Vec<f64> = logs.iter().map(|l| l.mid() * s - alpha * s).collect();
        let uniform = if ifs.all_ratios_equal() && (alpha.is_finite()) {
            let m = ifs.alphabet_size() as i64;
            let sum: f64 = log_weights.iter().map(|l| l.exp()).sum();
            ((sum - 1.0).abs() < 1e-9).then(|| BigRational::new(1.into(), m.into()))
        } else {
            None
        };
        Ok(GibbsWeights { alpha, s, log_weights, uniform, constant: ifs.distortion() })
    }

    /// Weights at the Hill–Velani root for `α`, rescaled to sum to exactly one
    /// in floating point.
    pub fn equilibrium(ifs: &IfsSpec, alpha: f64) -> Result<Self, ThermoError> {
        let s = PressureProfile::new(ifs).hv_exponent(alpha)?.value;
        let mut g = GibbsWeights::new(ifs, alpha, s)?;
        let sum = g.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ThermoError::NotNormalized { sum });
        }
        let shift = sum.ln();
        for l in &mut g.log_weights {
            *l -= shift;
        }
        Ok(g)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.weights().iter().sum()
    }

    pub fn log_mass(&self, word: &[Symbol]) -> f64 {
        word.iter().map(|&s| self.log_weights[s as usize]).sum()
    }

    /// `∏ w_{word_j}`; 1 for the empty word.
    pub fn mass(&self, word: &[Symbol]) -> f64 {
        self.log_mass(word).exp()
    }

    pub fn exact_mass(&self, word: &[Symbol]) -> Option<BigRational> {
        self.uniform.as_ref().map(|u| num_traits::pow::pow(u.clone(), word.len()))
    }

    /// Mass enclosure with the distortion constant applied on both sides.
    pub fn mass_enclosure(&self, word: &[Symbol]) -> Interval {
        let m = Interval::around(self.mass(word), 4);
        let c = Interval::point(self.constant);
        Interval::new((m / c).lo, (m * c).hi)
    }
}

/// Components of the relative-entropy identity
/// `D_KL(λ ‖ ℙ) = (s - d) χ + s α`, with `λ_i = a_i^d`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KlReport {
    pub d: f64,
    pub s: f64,
    pub alpha: f64,
    pub chi: f64,
    pub d_kl: f64,
    pub identity_rhs: f64,
    pub identity_residual: f64,
    pub weight_sum: f64,
}

/// `χ = -Σ a_i^d ln a_i`.
pub fn lyapunov(ifs: &IfsSpec, d: f64) -> Result<f64, ThermoError> {
    Ok(-ifs.log_ratios()?.iter().map(|l| (l.mid() * d).exp() * l.mid()).sum::<f64>())
}

pub fn kl_divergence(ifs: &IfsSpec, alpha: f64, s: f64) -> Result<KlReport, ThermoError> {
    let profile = PressureProfile::new(ifs);
    let d = profile.dimension()?.value;
    let g = GibbsWeights::new(ifs, alpha, s)?;
    let weight_sum = g.sum();
    if (weight_sum - 1.0).abs() > 1e-9 {
        return Err(ThermoError::NotNormalized { sum: weight_sum });
    }
    let logs: Vec<f64> = ifs.log_ratios()?.iter().map(Interval::mid).collect();
    let d_kl: f64 = logs
        .iter()
        .zip(&g.log_weights)
        .map(|(l, lw)| {
            let log_lambda = l * d;
            log_lambda.exp() * (log_lambda - lw)
        })
        .sum();
    let chi = lyapunov(ifs, d)?;
    let identity_rhs = (s - d) * chi + s * alpha;
    Ok(KlReport { d, s, alpha, chi, d_kl, identity_rhs, identity_residual: (d_kl - identity_rhs).abs(), weight_sum })
}

/// `Σ_i a_i^s` as an exact rational when `s` is a nonnegative integer.
pub fn ratio_power_sum(ifs: &IfsSpec, s: u32) -> Result<BigRational, ThermoError> {
    Ok(ifs
        .maps()?
        .iter()
        .fold(BigRational::from_integer(0.into()), |acc, m| acc + num_traits::pow::pow(m.ratio.clone(), s as usize)))
}

/// Whether `Σ a_i <= 1` exactly, a quick sanity bound used in reports.
pub fn total_ratio_at_most_one(ifs: &IfsSpec) -> Result<bool, ThermoError> {
    Ok(ratio_power_sum(ifs, 1)? <= BigRational::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rational;
    use crate::symbolic::theta_r;
    use proptest::prelude::*;

    /// Pieces placed left to right in `[0, 1]` with equal gaps.
    fn sys(ratios: &[(i64, i64)]) -> IfsSpec {
        let a: Vec<BigRational> = ratios.iter().map(|&(p, q)| rational(p, q)).collect();
        let total: BigRational = a.iter().sum();
        let gap = (rational(1, 1) - total) / rational(a.len() as i64 - 1, 1);
        let mut maps = Vec::new();
        let mut pos = rational(0, 1);
        for ai in a {
            maps.push(crate::ifs::SimilarityMap::new(ai.clone(), vec![pos.clone()]));
            pos = pos + ai + &gap;
        }
        IfsSpec::similarity(maps, rational(1, 1)).unwrap()
    }

    #[test]
    fn pressure_examples() {
        let cantor = IfsSpec::missing_digit(3, &[0, 2]).unwrap();
        let p = PressureProfile::new(&cantor);
        assert!(p.pressure(0.0).unwrap().contains(2f64.ln()));
        assert!(p.pressure(2f64.ln() / 3f64.ln()).unwrap().contains(0.0));
        let hq = sys(&[(1, 2), (1, 4)]);
        assert!(PressureProfile::new(&hq).pressure(1.0).unwrap().contains(0.75f64.ln()));
    }

    #[test]
    fn dimension_examples() {
        let cantor = IfsSpec::missing_digit(3, &[0, 2]).unwrap();
        let d = PressureProfile::new(&cantor).dimension().unwrap();
        assert!((d.value - 2f64.ln() / 3f64.ln()).abs() < 1e-12);
        assert!(d.certified && d.residual < 1e-12);
        let hq = sys(&[(1, 2), (1, 4)]);
        let d = PressureProfile::new(&hq).dimension().unwrap().value;
        let closed = (2.0 / (5f64.sqrt() - 1.0)).log2();
        assert!((d - closed).abs() < 1e-12);
    }

    #[test]
    fn hv_exponent_examples() {
        let cantor = IfsSpec::missing_digit(3, &[0, 2]).unwrap();
        let p = PressureProfile::new(&cantor);
        let d = p.dimension().unwrap().value;
        assert_eq!(p.hv_exponent(0.0).unwrap().value, d);
        assert!((p.hv_exponent(3f64.ln()).unwrap().value - d / 2.0).abs() < 1e-12);
        assert_eq!(p.hv_exponent(f64::INFINITY).unwrap().value, 0.0);
    }

    #[test]
    fn gibbs_examples() {
        let cantor = IfsSpec::missing_digit(3, &[0, 2]).unwrap();
        let g = GibbsWeights::equilibrium(&cantor, 3f64.ln()).unwrap();
        assert_eq!(g.mass(&[]), 1.0);
        assert!((g.mass(&[0]) - 0.5).abs() < 1e-12);
        assert_eq!(g.exact_mass(&[0, 1]), Some(rational(1, 4)));
    }

    #[test]
    fn gibbs_consistency_exhaustive() {
        for ratios in [&[(1, 2), (1, 4)][..], &[(1, 3), (1, 5)], &[(1, 2), (1, 3), (1, 7)]] {
            let ifs = sys(ratios);
            let g = GibbsWeights::equilibrium(&ifs, 0.4).unwrap();
            let m = ratios.len();
            let mut stack: Vec<Vec<Symbol>> = vec![vec![]];
            while let Some(u) = stack.pop() {
                if u.len() == 6 {
                    continue;
                }
                let children: f64 = (0..m as Symbol).map(|j| g.mass(&[u.clone(), vec![j]].concat())).sum();
                assert!((children - g.mass(&u)).abs() < 1e-14, "{u:?}");
                for j in 0..m as Symbol {
                    stack.push([u.clone(), vec![j]].concat());
                }
            }
        }
    }

    #[test]
    fn theta_partition_has_unit_mass() {
        let ifs = sys(&[(1, 2), (1, 4)]);
        let d = PressureProfile::new(&ifs).dimension().unwrap().value;
        let g = GibbsWeights::new(&ifs, 0.0, d).unwrap();
        let t = theta_r(&ifs, &rational(1, 200)).unwrap();
        let total: f64 = t.words.iter().map(|w| g.mass(w)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let ifs = sys(&[(1, 2), (1, 4)]);
        let s = PressureProfile::new(&ifs).hv_exponent(0.2).unwrap().value;
        let r = kl_divergence(&ifs, 0.2, s).unwrap();
        assert!(r.d_kl > 0.0 && r.identity_residual < 1e-10);
        let r0 = kl_divergence(&ifs, 0.0, r.d).unwrap();
        assert!(r0.d_kl.abs() < 1e-12);
        let uni = IfsSpec::missing_digit(5, &[0, 2, 4]).unwrap();
        let s = PressureProfile::new(&uni).hv_exponent(0.7).unwrap().value;
        assert!(kl_divergence(&uni, 0.7, s).unwrap().d_kl.abs() < 1e-12);
        assert!(matches!(kl_divergence(&ifs, 0.2, 0.1), Err(ThermoError::NotNormalized { .. })));
    }

    #[test]
    fn finite_n_estimate_brackets_closed_form() {
        let ifs = sys(&[(1, 2), (1, 3)]);
        let exact = PressureProfile::new(&ifs).pressure(0.7).unwrap();
        let est = PressureProfile::finite_n(&ifs, 6).pressure(0.7).unwrap();
        assert!(est.overlaps(&exact));
    }

    proptest! {
        #[test]
        fn pressure_is_strictly_decreasing(s1 in 0.0f64..3.0, ds in 1e-3f64..1.0) {
            let ifs = sys(&[(1, 2), (1, 3), (1, 7)]);
            let p = PressureProfile::new(&ifs);
            prop_assert!(p.pressure(s1).unwrap().certainly_lt(&p.pressure(s1 + ds).unwrap()) == false);
            prop_assert!(p.pressure(s1 + ds).unwrap().certainly_lt(&p.pressure(s1).unwrap()));
        }

        #[test]
        fn root_brackets_single_sign_change(alpha in 0.0f64..3.0) {
            let ifs = sys(&[(1, 3), (1, 5)]);
            let p = PressureProfile::new(&ifs);
            let d = p.dimension().unwrap().value;
            prop_assert!(p.pressure(0.0).unwrap().lo > 0.0);
            prop_assert!(p.pressure(d).unwrap().mid() - d * alpha <= 1e-12);
            let s = p.hv_exponent(alpha).unwrap();
            prop_assert!(s.residual <= 1e-12);
            prop_assert!(s.value <= d + 1e-12);
        }
    }
}
