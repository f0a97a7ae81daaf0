//! Iterated function systems: exact similarity maps, conformal systems given
//! by derivative oracles, cylinder diameters, separation checks and the coding
//! map.

use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{ln_rational, Interval};
use crate::rational::{format_rational, in_open_unit_interval, parse_rational, RationalParseError};
use crate::symbolic::{SymbolStream, SymbolicError};

pub type Symbol = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IfsError {
    #[error("invalid IFS JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error(transparent)]
    Rational(#[from] RationalParseError),
    #[error("map {index}: ratio {ratio} is not in (0, 1)")]
    RatioOutOfRange { index: usize, ratio: String },
    #[error("an IFS needs at least two maps, got {0}")]
    TooFewMaps(usize),
    #[error("map {index}: translation has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, got: usize, expected: usize },
    #[error("map {0}: orthogonal part is not an exact orthogonal matrix")]
    NotOrthogonal(usize),
    #[error("diameter must be positive, got {0}")]
    BadDiameter(String),
    #[error("declared diameter {declared} differs from the attractor hull length {hull}")]
    InconsistentDiameter { declared: String, hull: String },
    #[error("unknown mode `{0}` (expected \"similarity\")")]
    UnknownMode(String),
    #[error("conformal systems are built programmatically from derivative oracles")]
    ConformalFromJson,
    #[error("symbol {symbol} out of range for an alphabet of size {size}")]
    SymbolOutOfRange { symbol: Symbol, size: usize },
    #[error("operation requires a similarity system")]
    NotSimilarity,
    #[error("operation requires a one-dimensional system without reflections")]
    NotOneDimensional,
    #[error("distortion constant must be at least 1, got {0}")]
    BadDistortion(f64),
    #[error("projection tolerance must be positive")]
    BadTolerance,
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
}

/// `x -> ratio * O x + translation`, with `O` orthogonal (identity when absent).
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMap {
    pub ratio: BigRational,
    pub translation: Vec<BigRational>,
    pub orthogonal: Option<Vec<Vec<BigRational>>>,
}

impl SimilarityMap {
    pub fn new(ratio: BigRational, translation: Vec<BigRational>) -> Self {
        SimilarityMap { ratio, translation, orthogonal: None }
    }

    pub fn apply(&self, y: &[BigRational]) -> Vec<BigRational> {
        let rotated: Vec<BigRational> = match &self.orthogonal {
            None => y.to_vec(),
            Some(o) => o
                .iter()
                .map(|row| row.iter().zip(y).fold(BigRational::zero(), |acc, (a, b)| acc + a * b))
                .collect(),
        };
        rotated
            .iter()
            .zip(&self.translation)
            .map(|(r, b)| &self.ratio * r + b)
            .collect()
    }

    fn is_reflection_free_1d(&self) -> bool {
        match &self.orthogonal {
            None => true,
            Some(o) => o[0][0].is_one(),
        }
    }
}

/// Derivative enclosures for a conformal system.
pub trait ConformalOracle: Send + Sync + fmt::Debug {
    fn alphabet_size(&self) -> usize;
    /// Enclosure of `‖f_w'(ξ)‖` valid for every `ξ` in the attractor.
    fn derivative_enclosure(&self, word: &[Symbol]) -> Interval;
    fn name(&self) -> String;
}

#[derive(Clone, Debug)]
pub enum IfsKind {
    Similarity(Vec<SimilarityMap>),
    Conformal(Arc<dyn ConformalOracle>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    Absolute,
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationKind {
    Ssc,
    OscOnly,
    Overlapping,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationReport {
    pub kind: SeparationKind,
    /// Minimal gap between first-level pieces when strong separation holds.
    #[serde(serialize_with = "crate::report::ser_opt_rational")]
    pub delta: Option<BigRational>,
    pub certified_by: &'static str,
}

#[derive(Clone, Debug)]
pub struct IfsSpec {
    kind: IfsKind,
    dim: usize,
    diam: Interval,
    diam_exact: Option<BigRational>,
    distortion: f64,
    log_ratio_bounds: (Interval, Interval),
    separation_hint: Option<SeparationKind>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IfsDoc {
    mode: String,
    maps: Vec<MapDoc>,
    diam: String,
    #[serde(default)]
    separation: Option<SeparationKind>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDoc {
    ratio: String,
    translation: TranslationDoc,
    #[serde(default)]
    orthogonal: Option<Vec<Vec<String>>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TranslationDoc {
    Scalar(String),
    Vector(Vec<String>),
}

impl IfsSpec {
    pub fn similarity(maps: Vec<SimilarityMap>, diam: BigRational) -> Result<Self, IfsError> {
        if maps.len() < 2 {
            return Err(IfsError::TooFewMaps(maps.len()));
        }
        if !diam.is_positive() {
            return Err(IfsError::BadDiameter(format_rational(&diam)));
        }
        let dim = maps[0].translation.len();
        for (index, m) in maps.iter().enumerate() {
            if !in_open_unit_interval(&m.ratio) {
                return Err(IfsError::RatioOutOfRange { index, ratio: format_rational(&m.ratio) });
            }
            if m.translation.len() != dim || dim == 0 {
                return Err(IfsError::DimensionMismatch { index, got: m.translation.len(), expected: dim });
            }
            if let Some(o) = &m.orthogonal {
                if !is_orthogonal(o, dim) {
                    return Err(IfsError::NotOrthogonal(index));
                }
            }
        }
        let min = maps.iter().map(|m| &m.ratio).min().unwrap();
        let max = maps.iter().map(|m| &m.ratio).max().unwrap();
        let spec = IfsSpec {
            log_ratio_bounds: (ln_rational(min), ln_rational(max)),
            kind: IfsKind::Similarity(maps),
            dim,
            diam: Interval::from_rational(&diam),
            diam_exact: Some(diam.clone()),
            distortion: 1.0,
            separation_hint: None,
        };
        if let Some((lo, hi)) = spec.hull_1d() {
            let hull = hi - lo;
            if hull != diam {
                return Err(IfsError::InconsistentDiameter {
                    declared: format_rational(&diam),
                    hull: format_rational(&hull),
                });
            }
        }
        Ok(spec)
    }

    /// A conformal system described by a derivative oracle, a distortion
    /// constant `C >= 1` and bounds `a_min <= ‖f_i'‖ <= a_max`.
    pub fn conformal(
        oracle: Arc<dyn ConformalOracle>,
        dim: usize,
        diam: Interval,
        distortion: f64,
        a_min: f64,
        a_max: f64,
    ) -> Result<Self, IfsError> {
        if oracle.alphabet_size() < 2 {
            return Err(IfsError::TooFewMaps(oracle.alphabet_size()));
        }
        if !(distortion >= 1.0) {
            return Err(IfsError::BadDistortion(distortion));
        }
        if !(diam.lo > 0.0) {
            return Err(IfsError::BadDiameter(diam.to_string()));
        }
        Ok(IfsSpec {
            kind: IfsKind::Conformal(oracle),
            dim,
            diam,
            diam_exact: None,
            distortion,
            log_ratio_bounds: (Interval::point(a_min).ln(), Interval::point(a_max).ln()),
            separation_hint: Some(SeparationKind::Unknown),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, IfsError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &serde_json::Value) -> Result<Self, IfsError> {
        let doc: IfsDoc = serde_json::from_value(value.clone()).map_err(json_err)?;
        match doc.mode.as_str() {
            "similarity" => {}
            "conformal" => return Err(IfsError::ConformalFromJson),
            other => return Err(IfsError::UnknownMode(other.to_string())),
        }
        let mut maps = Vec::with_capacity(doc.maps.len());
        for m in &doc.maps {
            let translation = match &m.translation {
                TranslationDoc::Scalar(s) => vec![parse_rational(s)?],
                TranslationDoc::Vector(v) => v.iter().map(|s| parse_rational(s)).collect::<Result<_, _>>()?,
            };
            let orthogonal = match &m.orthogonal {
                None => None,
                Some(rows) => Some(
                    rows.iter()
                        .map(|r| r.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>, _>>())
                        .collect::<Result<Vec<_>, _>>()?,
                ),
            };
            maps.push(SimilarityMap { ratio: parse_rational(&m.ratio)?, translation, orthogonal });
        }
        let mut spec = Self::similarity(maps, parse_rational(&doc.diam)?)?;
        spec.separation_hint = doc.separation;
        Ok(spec)
    }

    /// Uniform one-dimensional system `x -> x/b + j/b` for the digits `j`.
    pub fn missing_digit(base: u32, digits: &[u32]) -> Result<Self, IfsError> {
        let ratio = BigRational::new(1.into(), base.into());
        let maps = digits
            .iter()
            .map(|&j| SimilarityMap::new(ratio.clone(), vec![BigRational::new(j.into(), base.into())]))
            .collect();
        let lo = *digits.iter().min().unwrap_or(&0);
        let hi = *digits.iter().max().unwrap_or(&0);
        // Hull of the attractor is [lo/(b-1), hi/(b-1)].
        let diam = BigRational::new((hi - lo).into(), (base - 1).into());
        Self::similarity(maps, diam)
    }

    pub fn kind(&self) -> &IfsKind {
        &self.kind
    }

    pub fn is_similarity(&self) -> bool {
        matches!(self.kind, IfsKind::Similarity(_))
    }

    pub fn maps(&self) -> Result<&[SimilarityMap], IfsError> {
        match &self.kind {
            IfsKind::Similarity(m) => Ok(m),
            IfsKind::Conformal(_) => Err(IfsError::NotSimilarity),
        }
    }

    pub fn alphabet_size(&self) -> usize {
        match &self.kind {
            IfsKind::Similarity(m) => m.len(),
            IfsKind::Conformal(o) => o.alphabet_size(),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> Norm {
        if self.dim == 1 {
            Norm::Absolute
        } else {
            Norm::Euclidean
        }
    }

    pub fn diam(&self) -> Interval {
        self.diam
    }

    pub fn diam_exact(&self) -> Option<&BigRational> {
        self.diam_exact.as_ref()
    }

    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    pub fn log_a_min(&self) -> Interval {
        self.log_ratio_bounds.0
    }

    pub fn log_a_max(&self) -> Interval {
        self.log_ratio_bounds.1
    }

    pub fn a_min(&self) -> f64 {
        self.log_ratio_bounds.0.exp().mid()
    }

    pub fn a_max(&self) -> f64 {
        self.log_ratio_bounds.1.exp().mid()
    }

    pub fn ratio(&self, i: Symbol) -> Result<&BigRational, IfsError> {
        let maps = self.maps()?;
        maps.get(i as usize)
            .map(|m| &m.ratio)
            .ok_or(IfsError::SymbolOutOfRange { symbol: i, size: maps.len() })
    }

    pub fn ratios_f64(&self) -> Result<Vec<f64>, IfsError> {
        Ok(self.maps()?.iter().map(|m| Interval::from_rational(&m.ratio).mid()).collect())
    }

    /// Enclosures of `ln a_i` for every symbol.
    pub fn log_ratios(&self) -> Result<Vec<Interval>, IfsError> {
        Ok(self.maps()?.iter().map(|m| ln_rational(&m.ratio)).collect())
    }

    pub fn all_ratios_equal(&self) -> bool {
        match &self.kind {
            IfsKind::Similarity(m) => m.iter().all(|x| x.ratio == m[0].ratio),
            IfsKind::Conformal(_) => false,
        }
    }

    fn check_word(&self, w: &[Symbol]) -> Result<(), IfsError> {
        let size = self.alphabet_size();
        match w.iter().find(|&&s| s as usize >= size) {
            Some(&symbol) => Err(IfsError::SymbolOutOfRange { symbol, size }),
            None => Ok(()),
        }
    }

    /// `diam(X) * prod a_{w_j}`, exactly.
    pub fn cylinder_diameter_exact(&self, w: &[Symbol]) -> Result<BigRational, IfsError> {
        self.check_word(w)?;
        let maps = self.maps()?;
        let diam = self.diam_exact.clone().ok_or(IfsError::NotSimilarity)?;
        Ok(w.iter().fold(diam, |acc, &s| acc * &maps[s as usize].ratio))
    }

    /// Enclosure of `ln diam(X_w)`; in conformal mode this uses the distortion
    /// bound `C^{-1} ‖f_w'‖ diam(X) <= diam(X_w) <= C ‖f_w'‖ diam(X)`.
    pub fn cylinder_log_diameter(&self, w: &[Symbol]) -> Result<Interval, IfsError> {
        self.check_word(w)?;
        match &self.kind {
            IfsKind::Similarity(_) => {
                let logs = self.log_ratios()?;
                let mut acc = self.diam.ln();
                for &s in w {
                    acc = acc + logs[s as usize];
                }
                Ok(acc)
            }
            IfsKind::Conformal(o) => {
                let d = o.derivative_enclosure(w).ln();
                let c = Interval::point(self.distortion).ln();
                let spread = Interval::new(-c.hi, c.hi);
                Ok(d + self.diam.ln() + spread)
            }
        }
    }

    /// Convex hull `[m, M]` of the attractor of a reflection-free 1-D system.
    /// The endpoints are the extreme fixed points of the maps.
    pub fn hull_1d(&self) -> Option<(BigRational, BigRational)> {
        let maps = match &self.kind {
            IfsKind::Similarity(m) if self.dim == 1 => m,
            _ => return None,
        };
        if !maps.iter().all(SimilarityMap::is_reflection_free_1d) {
            return None;
        }
        let fixed: Vec<BigRational> = maps
            .iter()
            .map(|m| &m.translation[0] / (BigRational::one() - &m.ratio))
            .collect();
        let lo = fixed.iter().min().unwrap().clone();
        let hi = fixed.iter().max().unwrap().clone();
        Some((lo, hi))
    }

    /// First-level images of the hull, sorted by left endpoint.
    fn first_level_hulls(&self) -> Option<Vec<(BigRational, BigRational, usize)>> {
        let (lo, hi) = self.hull_1d()?;
        let maps = self.maps().ok()?;
        let mut pieces: Vec<_> = maps
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let a = &m.ratio * &lo + &m.translation[0];
                let b = &m.ratio * &hi + &m.translation[0];
                (a, b, i)
            })
            .collect();
        pieces.sort_by(|x, y| x.0.cmp(&y.0));
        Some(pieces)
    }

    pub fn check_separation(&self) -> SeparationReport {
        if let Some(hint) = self.separation_hint {
            if hint != SeparationKind::Unknown || !self.is_similarity() {
                return SeparationReport { kind: hint, delta: None, certified_by: "user certificate" };
            }
        }
        let Some(pieces) = self.first_level_hulls() else {
            return SeparationReport { kind: SeparationKind::Unknown, delta: None, certified_by: "no decision procedure" };
        };
        // Each piece f_i(X) contains both endpoints of f_i(hull), so gaps
        // between sorted hull images are exactly the gaps between pieces.
        let mut min_gap: Option<BigRational> = None;
        let mut overlap = false;
        for w in pieces.windows(2) {
            let gap = &w[1].0 - &w[0].1;
            if gap.is_negative() {
                overlap = true;
            }
            min_gap = Some(match min_gap {
                None => gap,
                Some(g) => g.min(gap),
            });
        }
        let min_gap = min_gap.unwrap();
        if overlap {
            let total: BigRational = self.maps().unwrap().iter().map(|m| m.ratio.clone()).sum();
            let kind = if total > BigRational::one() { SeparationKind::Overlapping } else { SeparationKind::Unknown };
            return SeparationReport { kind, delta: None, certified_by: "exact hull images" };
        }
        if min_gap.is_zero() {
            SeparationReport { kind: SeparationKind::OscOnly, delta: None, certified_by: "exact hull images" }
        } else {
            SeparationReport { kind: SeparationKind::Ssc, delta: Some(min_gap), certified_by: "exact hull images" }
        }
    }

    /// `f_w(y)` computed exactly.
    pub fn image(&self, w: &[Symbol], y: &[BigRational]) -> Result<Vec<BigRational>, IfsError> {
        self.check_word(w)?;
        let maps = self.maps()?;
        let mut p = y.to_vec();
        for &s in w.iter().rev() {
            p = maps[s as usize].apply(&p);
        }
        Ok(p)
    }

    /// Fixed point of map `i`, solved exactly.
    pub fn fixed_point(&self, i: Symbol) -> Result<Vec<BigRational>, IfsError> {
        let maps = self.maps()?;
        let m = maps.get(i as usize).ok_or(IfsError::SymbolOutOfRange { symbol: i, size: maps.len() })?;
        let n = self.dim;
        // (I - a O) p = b
        let mut a: Vec<Vec<BigRational>> = (0..n)
            .map(|r| {
                let mut row: Vec<BigRational> = (0..n)
                    .map(|c| {
                        let o = match &m.orthogonal {
                            None => if r == c { BigRational::one() } else { BigRational::zero() },
                            Some(o) => o[r][c].clone(),
                        };
                        let id = if r == c { BigRational::one() } else { BigRational::zero() };
                        id - &m.ratio * o
                    })
                    .collect();
                row.push(m.translation[r].clone());
                row
            })
            .collect();
        solve_in_place(&mut a);
        Ok(a.into_iter().map(|row| row[n].clone()).collect())
    }

    /// Enclosure of `π(coding)` with every coordinate of width at most `tol`.
    pub fn project(&self, coding: &SymbolStream, tol: f64) -> Result<Vec<Interval>, IfsError> {
        if !(tol > 0.0) {
            return Err(IfsError::BadTolerance);
        }
        let log_tol = Interval::point(tol).ln();
        let mut depth = 0usize;
        // a_max^n * diam(X) <= tol
        while (self.diam.ln() + Interval::point(depth as f64) * self.log_a_max()).hi > log_tol.lo {
            depth += 1;
        }
        let w = coding.prefix(depth)?;
        let radius = self.cylinder_diameter_exact(&w)?;
        if let Some((lo, hi)) = self.hull_1d() {
            let a = self.image(&w, &[lo])?.remove(0);
            let b = self.image(&w, &[hi])?.remove(0);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            let ia = Interval::from_rational(&a);
            let ib = Interval::from_rational(&b);
            return Ok(vec![Interval::new(ia.lo, ib.hi)]);
        }
        // The fixed point of map w_1... lies in X, so π(coding) is within
        // diam(X_w) of f_w(p) for any p in X.
        let p = self.fixed_point(0)?;
        let centre = self.image(&w, &p)?;
        let r = Interval::from_rational(&radius);
        Ok(centre
            .iter()
            .map(|c| {
                let ic = Interval::from_rational(c);
                Interval::new((ic - r).lo, (ic + r).hi)
            })
            .collect())
    }

    pub fn summary(&self) -> IfsSummary {
        match &self.kind {
            IfsKind::Similarity(maps) => IfsSummary {
                mode: "similarity".into(),
                maps: maps
                    .iter()
                    .map(|m| MapSummary {
                        ratio: format_rational(&m.ratio),
                        translation: m.translation.iter().map(format_rational).collect(),
                    })
                    .collect(),
                diam: self.diam_exact.as_ref().map(format_rational).unwrap_or_default(),
                norm: self.norm(),
                oracle: None,
            },
            IfsKind::Conformal(o) => IfsSummary {
                mode: "conformal".into(),
                maps: Vec::new(),
                diam: format!("{}", self.diam),
                norm: self.norm(),
                oracle: Some(o.name()),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MapSummary {
    pub ratio: String,
    pub translation: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IfsSummary {
    pub mode: String,
    pub maps: Vec<MapSummary>,
    pub diam: String,
    pub norm: Norm,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<String>,
}

fn json_err(e: serde_json::Error) -> IfsError {
    IfsError::Json { line: e.line(), column: e.column(), message: e.to_string() }
}

fn is_orthogonal(o: &[Vec<BigRational>], dim: usize) -> bool {
    if o.len() != dim || o.iter().any(|r| r.len() != dim) {
        return false;
    }
    for i in 0..dim {
        for j in 0..dim {
            let dot: BigRational = (0..dim).map(|k| &o[k][i] * &o[k][j]).sum();
            let want = if i == j { BigRational::one() } else { BigRational::zero() };
            if dot != want {
                return false;
            }
        }
    }
    true
}

/// Gauss-Jordan elimination on an augmented matrix with a unique solution.
fn solve_in_place(a: &mut [Vec<BigRational>]) {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero()).expect("nonsingular system");
        a.swap(col, pivot);
        let p = a[col][col].clone();
        for v in a[col].iter_mut() {
            *v = &*v / &p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                let pivot_row = a[col].clone();
                for (v, pv) in a[r].iter_mut().zip(pivot_row.iter()) {
                    *v = &*v - &f * pv;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rational;

    pub(crate) fn cantor() -> IfsSpec {
        IfsSpec::from_json(
            r#"{"mode":"similarity","maps":[{"ratio":"1/3","translation":"0"},{"ratio":"1/3","translation":"2/3"}],"diam":"1"}"#,
        )
        .unwrap()
    }

    #[test]
    fn cantor_cylinder_diameter_is_exact() {
        let ifs = cantor();
        assert_eq!(ifs.cylinder_diameter_exact(&[0, 1, 0]).unwrap(), rational(1, 27));
        assert_eq!(ifs.cylinder_diameter_exact(&[]).unwrap(), rational(1, 1));
    }

    #[test]
    fn inhomogeneous_cylinder_diameter() {
        let ifs = IfsSpec::similarity(
            vec![
                SimilarityMap::new(rational(1, 2), vec![rational(0, 1)]),
                SimilarityMap::new(rational(1, 4), vec![rational(3, 4)]),
            ],
            rational(1, 1),
        )
        .unwrap();
        assert_eq!(ifs.cylinder_diameter_exact(&[0, 1]).unwrap(), rational(1, 8));
        assert!(ifs.cylinder_log_diameter(&[0, 1]).unwrap().contains((0.125f64).ln()));
    }

    #[test]
    fn separation_classification() {
        let c = cantor().check_separation();
        assert_eq!(c.kind, SeparationKind::Ssc);
        assert_eq!(c.delta, Some(rational(1, 3)));

        let halves = IfsSpec::from_json(
            r#"{"mode":"similarity","maps":[{"ratio":"1/2","translation":"0"},{"ratio":"1/2","translation":"1/2"}],"diam":"1"}"#,
        )
        .unwrap();
        assert_eq!(halves.check_separation().kind, SeparationKind::OscOnly);

        let over = IfsSpec::from_json(
            r#"{"mode":"similarity","maps":[{"ratio":"0.6","translation":"0"},{"ratio":"0.6","translation":"0.4"}],"diam":"1"}"#,
        )
        .unwrap();
        assert_eq!(over.check_separation().kind, SeparationKind::Overlapping);
    }

    #[test]
    fn rejects_bad_ratio_and_mismatched_diameter() {
        let bad = IfsSpec::from_json(
            r#"{"mode":"similarity","maps":[{"ratio":"3/2","translation":"0"},{"ratio":"1/3","translation":"2/3"}],"diam":"1"}"#,
        );
        assert!(matches!(bad, Err(IfsError::RatioOutOfRange { index: 0, .. })));
        let wrong_diam = IfsSpec::from_json(
            r#"{"mode":"similarity","maps":[{"ratio":"1/3","translation":"0"},{"ratio":"1/3","translation":"2/3"}],"diam":"2"}"#,
        );
        assert!(matches!(wrong_diam, Err(IfsError::InconsistentDiameter { .. })));
    }

    #[test]
    fn json_errors_carry_position() {
        let err = IfsSpec::from_json("{\"mode\": \"similarity\",\n \"maps\": [}").unwrap_err();
        match err {
            IfsError::Json { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn projection_of_simple_codings() {
        let ifs = cantor();
        let tol = 1e-12;
        let zero = ifs.project(&SymbolStream::periodic(vec![], vec![0]), tol).unwrap();
        assert!(zero[0].contains(0.0) && zero[0].width() <= 2e-12);
        let one = ifs.project(&SymbolStream::periodic(vec![], vec![1]), tol).unwrap();
        assert!(one[0].contains(1.0));
        let quarter = ifs.project(&SymbolStream::periodic(vec![], vec![0, 1]), tol).unwrap();
        assert!(quarter[0].contains(0.25), "{}", quarter[0]);
    }

    #[test]
    fn planar_projection_uses_fixed_point_ball() {
        let ifs = IfsSpec::from_json(
            r#"{"mode":"similarity","maps":[
                {"ratio":"1/2","translation":["0","0"]},
                {"ratio":"1/2","translation":["1/2","0"]},
                {"ratio":"1/2","translation":["0","1/2"]}],"diam":"2"}"#,
        )
        .unwrap();
        assert_eq!(ifs.norm(), Norm::Euclidean);
        let p = ifs.project(&SymbolStream::periodic(vec![], vec![1]), 1e-9).unwrap();
        assert!(p[0].contains(1.0) && p[1].contains(0.0));
        assert_eq!(ifs.fixed_point(2).unwrap(), vec![rational(0, 1), rational(1, 1)]);
    }

    #[test]
    fn reflection_requires_exact_orthogonal_matrix() {
        let bad = IfsSpec::from_json(
            r#"{"mode":"similarity","maps":[{"ratio":"1/3","translation":"0","orthogonal":[["2"]]},{"ratio":"1/3","translation":"2/3"}],"diam":"1"}"#,
        );
        assert!(matches!(bad, Err(IfsError::NotOrthogonal(0))));
    }
}
