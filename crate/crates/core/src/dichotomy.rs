//! The zero/full dichotomy for `𝓗^s` of shrinking-target sets.
//!
//! Convergence of `Σ_n ψ(n)^s Σ_{|i|=n} ‖f_i'‖^s` is decided by exponent
//! algebra for parametric ψ. A finite table only gives heuristic verdicts.

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::ifs::{IfsError, IfsSpec, SeparationKind};
use crate::interval::Interval;
use crate::psi::{ApproxFn, PsiError, Real, ShrinkingRate};
use crate::report::ser_extended;
use crate::symbolic::{SymbolStream, SymbolicError};
use crate::thermo::{PressureProfile, ThermoError};

/// Tolerance for the critical equalities `P(s) = sα` and `βs = 1`.
pub const CRITICAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DichotomyError {
    #[error(transparent)]
    Ifs(#[from] IfsError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Psi(#[from] PsiError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error("the open set condition fails: first-level images overlap")]
    Overlapping,
    #[error("s must be a nonnegative real, got {0}")]
    BadExponent(f64),
    #[error("invalid missing-digit data: {0}")]
    BadDigits(String),
    #[error("invalid φ: {0}")]
    BadPhi(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converges,
    Diverges,
    HeuristicConverges,
    HeuristicDiverges,
    Inconclusive,
}

impl Convergence {
    pub fn diverges(self) -> Option<bool> {
        match self {
            Convergence::Converges | Convergence::HeuristicConverges => Some(false),
            Convergence::Diverges | Convergence::HeuristicDiverges => Some(true),
            Convergence::Inconclusive => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureStatement {
    Zero,
    Full,
    DimensionBelowS,
    DimensionAboveS,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub s: f64,
    #[serde(serialize_with = "ser_extended")]
    pub alpha: f64,
    pub critical_series: String,
    pub convergence: Convergence,
    pub measure_statement: MeasureStatement,
    pub dim_w: f64,
    pub heuristic: bool,
    /// `P(s) - sα` (`-inf` when `α = ∞` and `s > 0`).
    #[serde(serialize_with = "ser_extended")]
    pub pressure_gap: f64,
    pub provenance: String,
    pub separation: SeparationKind,
    pub norm: crate::ifs::Norm,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub partial_sums: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Verdict {
    pub fn is_decided(&self) -> bool {
        self.convergence != Convergence::Inconclusive
    }
}

/// `ln(ψ(n)^s e^{n P(s)})`, or `None` when `ψ(n) = 0` and `s > 0`.
pub fn critical_sum_log_term(ifs: &IfsSpec, psi: &ApproxFn, s: f64, n: u64) -> Result<Option<Interval>, DichotomyError> {
    if !(s >= 0.0) {
        return Err(DichotomyError::BadExponent(s));
    }
    let p = PressureProfile::new(ifs).pressure(s)?;
    let np = Interval::point(n as f64) * p;
    if s == 0.0 {
        return Ok(Some(np));
    }
    Ok(psi.log_value(n)?.map(|l| l * Interval::point(s) + np))
}

/// `ψ(n)^s Σ_{|i|=n} a_i^s` as a float (0 when it underflows or ψ(n) = 0).
pub fn critical_sum_term(ifs: &IfsSpec, psi: &ApproxFn, s: f64, n: u64) -> Result<f64, DichotomyError> {
    Ok(critical_sum_log_term(ifs, psi, s, n)?.map_or(0.0, |l| l.mid().exp()))
}

/// Decides the dichotomy. With `s = None` the Hill–Velani exponent is used.
pub fn classify(
    ifs: &IfsSpec,
    x: &SymbolStream,
    psi: &ApproxFn,
    s: Option<f64>,
) -> Result<Verdict, DichotomyError> {
    x.check_alphabet(ifs.alphabet_size())?;
    let sep = ifs.check_separation();
    if sep.kind == SeparationKind::Overlapping {
        return Err(DichotomyError::Overlapping);
    }
    let mut notes = Vec::new();
    if sep.kind == SeparationKind::Unknown {
        notes.push("open set condition not certified; verdict assumes it".to_string());
    }
    let profile = PressureProfile::new(ifs);
    let rate = psi.shrinking_rate();
    let alpha = rate.value();
    let dim_w = profile.hv_exponent(alpha)?.value;
    let s = s.unwrap_or(dim_w);
    if !(s >= 0.0) || !s.is_finite() {
        return Err(DichotomyError::BadExponent(s));
    }
    let p_s = profile.pressure(s)?.mid();
    let gap = if alpha.is_infinite() {
        if s > 0.0 { f64::NEG_INFINITY } else { p_s }
    } else {
        p_s - s * alpha
    };
    let base = Verdict {
        s,
        alpha,
        critical_series: String::new(),
        convergence: Convergence::Inconclusive,
        measure_statement: MeasureStatement::DimensionBelowS,
        dim_w,
        heuristic: rate.is_estimate(),
        pressure_gap: gap,
        provenance: String::new(),
        separation: sep.kind,
        norm: ifs.norm(),
        partial_sums: Vec::new(),
        notes,
    };
    match psi {
        ApproxFn::Table(_) => Ok(classify_table(ifs, psi, rate, base)?),
        ApproxFn::SuperExp { .. } => Ok(decide(
            base,
            if s == 0.0 { Convergence::Diverges } else { Convergence::Converges },
            "Σ ψ(n)^s e^{nP(s)} with ψ super-exponential".into(),
            if s == 0.0 {
                "analytic: s = 0, every term is #Λ^n; the set is a dense G_δ of infinite 𝓗^0 measure".into()
            } else {
                "analytic: α = ∞ so the terms decay super-exponentially and dim W = 0 < s".into()
            },
        )),
        ApproxFn::ExpPoly { beta, .. } => {
            let beta_v = beta.value();
            let series = format!("Σ ψ(n)^s e^{{nP(s)}}, term ≍ n^{{-βs}} e^{{n(P(s)-sα)}} with βs = {:.17e}", beta_v * s);
            let (conv, why) = if gap > CRITICAL_TOL {
                (Convergence::Diverges, format!("analytic: P(s) - sα = {gap:.6e} > 0, terms grow exponentially"))
            } else if gap < -CRITICAL_TOL {
                (Convergence::Converges, format!("analytic: P(s) - sα = {gap:.6e} < 0, terms decay exponentially"))
            } else if beta_v * s <= 1.0 + CRITICAL_TOL {
                (Convergence::Diverges, format!("analytic: critical exponent, βs = {:.6} <= 1", beta_v * s))
            } else {
                (Convergence::Converges, format!("analytic: critical exponent, βs = {:.6} > 1", beta_v * s))
            };
            Ok(decide(base, conv, series, why))
        }
    }
}

fn decide(mut v: Verdict, conv: Convergence, series: String, why: String) -> Verdict {
    v.convergence = conv;
    v.critical_series = series;
    v.provenance = why;
    v.measure_statement = match conv.diverges() {
        Some(true) => MeasureStatement::Full,
        Some(false) => MeasureStatement::Zero,
        None if v.s < v.dim_w => MeasureStatement::DimensionAboveS,
        None => MeasureStatement::DimensionBelowS,
    };
    if v.s > v.dim_w + CRITICAL_TOL && v.measure_statement == MeasureStatement::Full {
        v.notes.push("inconsistent: full measure above the dimension".into());
    }
    v
}

fn classify_table(ifs: &IfsSpec, psi: &ApproxFn, rate: ShrinkingRate, mut base: Verdict) -> Result<Verdict, DichotomyError> {
    base.heuristic = true;
    let end = psi.domain_end().unwrap_or(0);
    let s = base.s;
    let mut logs = Vec::new();
    let mut partial = Vec::new();
    let mut acc = 0.0f64;
    for n in 1..=end {
        let t = critical_sum_log_term(ifs, psi, s, n)?;
        let v = t.map_or(0.0, |l| l.mid().exp());
        acc += v;
        partial.push(acc);
        logs.push((n as f64, t.map(|l| l.mid())));
    }
    base.partial_sums = partial;
    let series = "Σ ψ(n)^s e^{nP(s)} over a finite table".to_string();
    if let ShrinkingRate::Unbounded { .. } = rate {
        let conv = if s == 0.0 { Convergence::HeuristicDiverges } else { Convergence::HeuristicConverges };
        return Ok(decide(base, conv, series, "heuristic: table decays super-exponentially".into()));
    }
    let tail: Vec<(f64, f64)> = logs[logs.len() / 2..].iter().filter_map(|&(n, l)| l.map(|l| (n, l))).collect();
    if tail.len() < 4 {
        return Ok(decide(base, Convergence::Inconclusive, series, "heuristic: table too short".into()));
    }
    let (exp_slope, _) = regression(&tail);
    let log_tail: Vec<(f64, f64)> = tail.iter().map(|&(n, l)| (n.ln(), l)).collect();
    let (poly_slope, _) = regression(&log_tail);
    let (conv, why) = if exp_slope > 1e-3 {
        (Convergence::HeuristicDiverges, format!("heuristic: terms grow, ln-term slope {exp_slope:.4e} per step"))
    } else if exp_slope < -1e-3 {
        (Convergence::HeuristicConverges, format!("heuristic: terms decay, ln-term slope {exp_slope:.4e} per step"))
    } else if poly_slope > -0.95 {
        (Convergence::HeuristicDiverges, format!("heuristic: terms ≍ n^{poly_slope:.3}"))
    } else if poly_slope < -1.05 {
        (Convergence::HeuristicConverges, format!("heuristic: terms ≍ n^{poly_slope:.3}"))
    } else {
        (Convergence::Inconclusive, format!("heuristic: terms ≍ n^{poly_slope:.3}, too close to n^-1"))
    };
    Ok(decide(base, conv, series, why))
}

/// Least-squares slope and intercept.
fn regression(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// `φ(q) = c q^{-τ} (log_b q)^{-β}` for the missing-digit problem.
#[derive(Clone, Debug, PartialEq)]
pub struct LsvPhi {
    pub c: BigRational,
    pub tau: BigRational,
    pub beta: Real,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LsvReport {
    pub base: u32,
    pub digits: Vec<u32>,
    pub gamma_star: f64,
    pub verdict: Verdict,
    /// Direct evaluation of `Σ φ(b^n)^s (b^n)^{γ*}`.
    pub direct: Convergence,
    pub agree: bool,
}

impl LsvPhi {
    /// `ψ(n) = b^n φ(b^n) = c b^{n(1-τ)} n^{-β}`.
    pub fn to_psi(&self, b: u32) -> Result<ApproxFn, DichotomyError> {
        let excess = &self.tau - BigRational::one();
        if excess.is_negative() {
            return Err(DichotomyError::BadPhi("τ < 1 makes ψ(n) = b^n φ(b^n) increase".into()));
        }
        let alpha = if excess.is_zero() {
            Real::Exact(BigRational::zero())
        } else if excess.is_integer() {
            let k = excess.to_integer().to_usize().ok_or_else(|| DichotomyError::BadPhi("τ too large".into()))?;
            Real::LogOf(num_traits::pow::pow(BigRational::from_integer(b.into()), k))
        } else {
            Real::Float(excess.to_f64().unwrap_or(f64::NAN) * (b as f64).ln())
        };
        Ok(ApproxFn::exp_poly(self.c.clone(), self.beta.clone(), alpha)?)
    }
}

/// Translates missing-digit data into a uniform system and compares
/// [`classify`] with a direct evaluation of the missing-digit series.
pub fn lsv_crosscheck(b: u32, digits: &[u32], phi: &LsvPhi, s: f64) -> Result<LsvReport, DichotomyError> {
    let mut j: Vec<u32> = digits.to_vec();
    j.sort_unstable();
    j.dedup();
    if b < 3 {
        return Err(DichotomyError::BadDigits(format!("base must be at least 3, got {b}")));
    }
    if j.len() < 2 || j.len() >= b as usize || j.iter().any(|&d| d >= b) {
        return Err(DichotomyError::BadDigits(format!("digit set {j:?} is not a proper subset of size >= 2 of 0..{b}")));
    }
    let ifs = IfsSpec::missing_digit(b, &j)?;
    let psi = phi.to_psi(b)?;
    let verdict = classify(&ifs, &SymbolStream::constant(0), &psi, Some(s))?;
    let gamma_star = (j.len() as f64).ln() / (b as f64).ln();
    // Σ c^s b^{-nτs} n^{-βs} b^{nγ*}: exponent (γ* - τs) ln b per step.
    let tau = phi.tau.to_f64().unwrap_or(f64::NAN);
    let growth = gamma_star - tau * s;
    let direct = if growth > CRITICAL_TOL {
        Convergence::Diverges
    } else if growth < -CRITICAL_TOL {
        Convergence::Converges
    } else if phi.beta.value() * s <= 1.0 + CRITICAL_TOL {
        Convergence::Diverges
    } else {
        Convergence::Converges
    };
    let agree = verdict.convergence == direct;
    Ok(LsvReport { base: b, digits: j, gamma_star, verdict, direct, agree })
}
