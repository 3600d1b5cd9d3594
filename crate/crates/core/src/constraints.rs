//! Constraint families, unit-norm Riesz representors, signed distances, the
//! global search for the most violated constraint and violation sets.
//!
//! A family (m, sense, r, ω) asks for v^{(m)}(y) ≥ r^{(m)}(y) (lower) or
//! v^{(m)}(y) ≤ r^{(m)}(y) (upper) for every y in ω. For each y this is the
//! halfspace ⟨ℓ̂(y), c⟩ ≤ β(y) with ℓ̂ ∝ σ (v_1^{(m)}(y), ..., v_N^{(m)}(y)).

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::basis::{cached_gauss_rule, legendre_values, OrthonormalBasis};
use crate::rootfind::{real_roots_with_tolerance, sign_partition, PolyInBasis};
use crate::{Error, Result};

/// Representors shorter than this are treated as vanishing.
const DEGENERATE_NORM: f64 = 1e-14;
/// Eigenvalues with |Im| up to this are tried as critical points. An extra
/// candidate costs one evaluation, a missed one can hide the minimum.
const CRITICAL_IMAG_TOL: f64 = 1e-5;
/// Violation cells narrower than this have measure zero for our purposes.
pub const MIN_CELL_WIDTH: f64 = 1e-13;
/// Slack allowed when checking that y lies in a family's domain.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// v^{(m)} ≥ r^{(m)}
    Lower,
    /// v^{(m)} ≤ r^{(m)}
    Upper,
}

impl Sense {
    pub fn sigma(self) -> f64 {
        match self {
            Sense::Lower => -1.0,
            Sense::Upper => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sense::Lower => "lower",
            Sense::Upper => "upper",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintFamily {
    pub deriv_order: usize,
    pub sense: Sense,
    /// Coordinates of the bound function r in the basis.
    pub bound_coeffs: DVector<f64>,
    /// Disjoint closed subintervals of [-1, 1], sorted.
    pub domain: Vec<(f64, f64)>,
}

impl ConstraintFamily {
    pub fn new(
        deriv_order: usize,
        sense: Sense,
        bound_coeffs: DVector<f64>,
        mut domain: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if domain.is_empty() {
            return Err(Error::InvalidArgument("constraint domain is empty".into()));
        }
        domain.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(lo, hi) in &domain {
            if !(lo >= -1.0 && hi <= 1.0 && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "subinterval [{lo}, {hi}] is not a proper subinterval of [-1, 1]"
                )));
            }
        }
        if domain.windows(2).any(|w| w[1].0 <= w[0].1) {
            return Err(Error::InvalidArgument(
                "subintervals of a constraint domain must be disjoint".into(),
            ));
        }
        Ok(Self {
            deriv_order,
            sense,
            bound_coeffs,
            domain,
        })
    }

    /// v^{(m)} ≥ 0 (lower) or v^{(m)} ≤ 0 (upper) on all of [-1, 1].
    pub fn zero_bound(dim: usize, deriv_order: usize, sense: Sense) -> Self {
        Self {
            deriv_order,
            sense,
            bound_coeffs: DVector::zeros(dim),
            domain: vec![(-1.0, 1.0)],
        }
    }

    pub fn dim(&self) -> usize {
        self.bound_coeffs.len()
    }

    pub fn contains(&self, y: f64) -> bool {
        self.domain
            .iter()
            .any(|&(lo, hi)| y >= lo - DOMAIN_SLACK && y <= hi + DOMAIN_SLACK)
    }
}

/// Unit representor and bound of the halfspace ⟨ell_hat, c⟩ ≤ bound_value.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentorFrame {
    pub y: f64,
    pub ell_hat: DVector<f64>,
    pub bound_value: f64,
}

impl RepresentorFrame {
    pub fn sdist(&self, c: &DVector<f64>) -> f64 {
        self.bound_value - self.ell_hat.dot(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub families: Vec<ConstraintFamily>,
}

impl ConstraintSet {
    pub fn new(families: Vec<ConstraintFamily>) -> Result<Self> {
        if families.is_empty() {
            return Err(Error::InvalidArgument(
                "a constraint set needs at least one family".into(),
            ));
        }
        Ok(Self { families })
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }
}

/// Most violated (or least satisfied) constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstPoint {
    pub y: f64,
    pub k: usize,
    pub value: f64,
}

/// Per-family samples at a Gauss rule that is exact for projecting the
/// critical-point polynomial. Everything here is independent of the iterate.
#[derive(Debug)]
struct FamilyCache {
    deg_p: usize,
    /// project[(k, i)] = w_i p_k(x_i)
    project: DMatrix<f64>,
    /// columns: representor directions for v^{(m)} and v^{(m+1)} at x_i
    u0: DMatrix<f64>,
    u1: DMatrix<f64>,
    r0: DVector<f64>,
    r1: DVector<f64>,
    s: DVector<f64>,
    t: DVector<f64>,
}

/// Evaluation context for a constraint set in some working coordinates x.
///
/// Basis coordinates are c = P x for a fixed invertible P (the identity unless
/// a linear map was attached). Representors live in working coordinates:
/// u(y) = Pᵀ v^{(m)}(y), so that ⟨u(y), x⟩ = v^{(m)}(y).
pub struct ConstraintContext<'a> {
    basis: &'a OrthonormalBasis,
    set: &'a ConstraintSet,
    to_coeffs: Option<DMatrix<f64>>,
    caches: Vec<OnceLock<FamilyCache>>,
}

impl<'a> ConstraintContext<'a> {
    pub fn new(set: &'a ConstraintSet, basis: &'a OrthonormalBasis) -> Result<Self> {
        Self::build(set, basis, None)
    }

    /// Context in coordinates x with c = `to_coeffs` · x.
    pub fn with_map(
        set: &'a ConstraintSet,
        basis: &'a OrthonormalBasis,
        to_coeffs: DMatrix<f64>,
    ) -> Result<Self> {
        let n = basis.dim();
        if to_coeffs.shape() != (n, n) {
            return Err(Error::InvalidArgument(format!(
                "coordinate map has shape {:?}, expected ({n}, {n})",
                to_coeffs.shape()
            )));
        }
        Self::build(set, basis, Some(to_coeffs))
    }

    fn build(
        set: &'a ConstraintSet,
        basis: &'a OrthonormalBasis,
        to_coeffs: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::InvalidArgument("empty constraint set".into()));
        }
        for (k, fam) in set.families.iter().enumerate() {
            if fam.dim() != basis.dim() {
                return Err(Error::InvalidArgument(format!(
                    "family {k} has {} bound coefficients, basis dimension is {}",
                    fam.dim(),
                    basis.dim()
                )));
            }
        }
        Ok(Self {
            basis,
            set,
            to_coeffs,
            caches: (0..set.len()).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn basis(&self) -> &OrthonormalBasis {
        self.basis
    }

    pub fn set(&self) -> &ConstraintSet {
        self.set
    }

    pub fn is_mapped(&self) -> bool {
        self.to_coeffs.is_some()
    }

    /// Basis coordinates c = P x.
    pub fn to_coeffs(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.to_coeffs {
            Some(p) => p * x,
            None => x.clone(),
        }
    }

    fn pull_back(&self, w: DVector<f64>) -> DVector<f64> {
        match &self.to_coeffs {
            Some(p) => p.tr_mul(&w),
            None => w,
        }
    }

    fn family(&self, k: usize) -> Result<&ConstraintFamily> {
        self.set
            .families
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("no constraint family {k}")))
    }

    /// Degree of v^{(m)}, or a degenerate-representor error if it vanishes.
    fn derivative_degree(&self, k: usize) -> Result<usize> {
        let fam = self.family(k)?;
        (self.basis.dim() - 1)
            .checked_sub(fam.deriv_order)
            .ok_or(Error::DegenerateRepresentor { y: fam.domain[0].0 })
    }

    /// Unit representor of family k at y, in working coordinates.
    pub fn frame(&self, k: usize, y: f64) -> Result<RepresentorFrame> {
        let fam = self.family(k)?;
        if !fam.contains(y) {
            return Err(Error::InvalidArgument(format!(
                "y = {y} is outside the domain of family {k}"
            )));
        }
        let m = fam.deriv_order;
        let w = self.basis.eval_orders(y, m).swap_remove(m);
        let r_m = fam.bound_coeffs.dot(&w);
        let u = self.pull_back(w);
        let norm = u.norm();
        if !(norm >= DEGENERATE_NORM) {
            return Err(Error::DegenerateRepresentor { y });
        }
        let sigma = fam.sense.sigma();
        Ok(RepresentorFrame {
            y,
            ell_hat: u * (sigma / norm),
            bound_value: sigma * r_m / norm,
        })
    }

    pub fn sdist(&self, x: &DVector<f64>, k: usize, y: f64) -> Result<f64> {
        Ok(self.frame(k, y)?.sdist(x))
    }

    fn cache(&self, k: usize) -> Result<&FamilyCache> {
        let deg_p = self.derivative_degree(k)?;
        if let Some(c) = self.caches[k].get() {
            return Ok(c);
        }
        let built = self.build_cache(k, deg_p)?;
        Ok(self.caches[k].get_or_init(|| built))
    }

    fn build_cache(&self, k: usize, deg_p: usize) -> Result<FamilyCache> {
        let fam = &self.set.families[k];
        let m = fam.deriv_order;
        // the critical polynomial has degree 3 deg_p - 1; projecting it onto
        // modes 0..3 deg_p needs exactness for degree 6 deg_p - 1
        let size = (3 * deg_p).max(1);
        let rule = cached_gauss_rule(size)?;
        let n = self.basis.dim();
        let mut project = DMatrix::zeros(size, size);
        let mut u0 = DMatrix::zeros(n, size);
        let mut u1 = DMatrix::zeros(n, size);
        let mut r0 = DVector::zeros(size);
        let mut r1 = DVector::zeros(size);
        let mut s = DVector::zeros(size);
        let mut t = DVector::zeros(size);
        for (i, (&x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            for (kk, p) in legendre_values(x, size).into_iter().enumerate() {
                project[(kk, i)] = w * p;
            }
            let mut d = self.basis.eval_orders(x, m + 1);
            let d1 = d.pop().expect("two derivative orders");
            let d0 = d.pop().expect("two derivative orders");
            r0[i] = fam.bound_coeffs.dot(&d0);
            r1[i] = fam.bound_coeffs.dot(&d1);
            let a = self.pull_back(d0);
            let b = self.pull_back(d1);
            s[i] = a.norm_squared();
            t[i] = a.dot(&b);
            u0.set_column(i, &a);
            u1.set_column(i, &b);
        }
        Ok(FamilyCache {
            deg_p,
            project,
            u0,
            u1,
            r0,
            r1,
            s,
            t,
        })
    }

    /// Legendre coefficients of g = p' S - p T, p = v^{(m)} - r^{(m)},
    /// S = ‖u‖², T = ⟨u, u'⟩. Its roots are the critical points of sdist(·).
    pub fn critical_poly(&self, x: &DVector<f64>, k: usize) -> Result<PolyInBasis> {
        let cache = self.cache(k)?;
        let p = cache.u0.tr_mul(x) - &cache.r0;
        let dp = cache.u1.tr_mul(x) - &cache.r1;
        let g = dp.component_mul(&cache.s) - p.component_mul(&cache.t);
        let mut coeffs: Vec<f64> = (&cache.project * g).iter().copied().collect();
        coeffs.truncate((3 * cache.deg_p).max(1));
        Ok(PolyInBasis::new(coeffs))
    }

    /// Legendre coefficients of σ (r^{(m)} - v^{(m)}); negative exactly where
    /// family k is violated.
    fn slack_poly(&self, x: &DVector<f64>, k: usize) -> Result<PolyInBasis> {
        let cache = self.cache(k)?;
        let sigma = self.set.families[k].sense.sigma();
        let q = (&cache.r0 - cache.u0.tr_mul(x)) * sigma;
        let mut coeffs: Vec<f64> = (&cache.project * q).iter().copied().collect();
        coeffs.truncate(cache.deg_p + 1);
        Ok(PolyInBasis::new(coeffs))
    }

    /// Minimum of sdist over the domain of family k: checks subinterval
    /// endpoints and the real critical points inside.
    pub fn min_sdist_family(&self, x: &DVector<f64>, k: usize) -> Result<WorstPoint> {
        let fam = self.family(k)?;
        let g = self.critical_poly(x, k)?;
        let mut best: Option<WorstPoint> = None;
        for &(lo, hi) in &fam.domain {
            let mut candidates = vec![lo];
            candidates.extend(real_roots_with_tolerance(&g, lo, hi, CRITICAL_IMAG_TOL)?);
            candidates.push(hi);
            for y in candidates {
                let value = self.sdist(x, k, y)?;
                if best.is_none_or(|b| value < b.value) {
                    best = Some(WorstPoint { y, k, value });
                }
            }
        }
        Ok(best.expect("domain has at least one subinterval"))
    }

    /// Global minimiser of sdist over all families; ties go to the smallest
    /// family index, then the smallest y.
    pub fn min_sdist_global(&self, x: &DVector<f64>) -> Result<WorstPoint> {
        let mut best: Option<WorstPoint> = None;
        for k in 0..self.set.len() {
            let cand = self.min_sdist_family(x, k)?;
            if best.is_none_or(|b| cand.value < b.value) {
                best = Some(cand);
            }
        }
        Ok(best.expect("constraint set is not empty"))
    }

    /// Subintervals of family k's domain on which x violates the constraint.
    pub fn violation_set(&self, x: &DVector<f64>, k: usize) -> Result<Vec<(f64, f64)>> {
        let fam = self.family(k)?;
        let q = self.slack_poly(x, k)?;
        let mut cells: Vec<(f64, f64)> = Vec::new();
        for &(lo, hi) in &fam.domain {
            let part = sign_partition(&q, lo, hi)?;
            for ((a, b), s) in part.cells() {
                if s >= 0 || b - a < MIN_CELL_WIDTH {
                    continue;
                }
                match cells.last_mut() {
                    Some(last) if last.1 == a => last.1 = b,
                    _ => cells.push((a, b)),
                }
            }
        }
        Ok(cells)
    }
}

fn single_family_set(fam: &ConstraintFamily) -> ConstraintSet {
    ConstraintSet {
        families: vec![fam.clone()],
    }
}

/// Unit representor ℓ̂(y) and bound of `fam` at y.
pub fn riesz_coeffs(
    fam: &ConstraintFamily,
    y: f64,
    basis: &OrthonormalBasis,
) -> Result<RepresentorFrame> {
    let set = single_family_set(fam);
    ConstraintContext::new(&set, basis)?.frame(0, y)
}

/// Signed distance from c to the constraint hyperplane of `fam` at y; positive
/// when the constraint holds strictly.
pub fn sdist(
    c: &DVector<f64>,
    fam: &ConstraintFamily,
    y: f64,
    basis: &OrthonormalBasis,
) -> Result<f64> {
    Ok(riesz_coeffs(fam, y, basis)?.sdist(c))
}

pub fn min_sdist_global(
    c: &DVector<f64>,
    set: &ConstraintSet,
    basis: &OrthonormalBasis,
) -> Result<WorstPoint> {
    ConstraintContext::new(set, basis)?.min_sdist_global(c)
}

pub fn critical_poly_coeffs(
    c: &DVector<f64>,
    fam: &ConstraintFamily,
    basis: &OrthonormalBasis,
) -> Result<PolyInBasis> {
    if basis.dim() < 2 {
        return Err(Error::InvalidArgument(
            "critical polynomial needs dimension at least 2".into(),
        ));
    }
    let set = single_family_set(fam);
    ConstraintContext::new(&set, basis)?.critical_poly(c, 0)
}

pub fn violation_set(
    c: &DVector<f64>,
    fam: &ConstraintFamily,
    basis: &OrthonormalBasis,
) -> Result<Vec<(f64, f64)>> {
    let set = single_family_set(fam);
    ConstraintContext::new(&set, basis)?.violation_set(c, 0)
}

/// Context for the coordinates z = Σ Vᵀ c of a full-rank factorisation
/// A = U Σ Vᵀ, i.e. c = V Σ⁻¹ z.
pub fn transform_under_map<'a>(
    set: &'a ConstraintSet,
    basis: &'a OrthonormalBasis,
    singular_values: &DVector<f64>,
    v: &DMatrix<f64>,
) -> Result<ConstraintContext<'a>> {
    let smax = singular_values.amax();
    let smin = singular_values
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(ratio > crate::approx::RANK_TOL) {
        return Err(Error::RankDeficient { ratio });
    }
    let mut p = v.clone();
    for (j, s) in singular_values.iter().enumerate() {
        p.column_mut(j).unscale_mut(*s);
    }
    ConstraintContext::with_map(set, basis, p)
}

/// Coordinates of the element x ↦ x (the identity function) in `basis`.
pub fn identity_coeffs(basis: &OrthonormalBasis) -> Result<DVector<f64>> {
    if basis.dim() < 2 {
        return Err(Error::InvalidArgument(
            "x is not in a basis of dimension 1".into(),
        ));
    }
    basis.from_legendre(&[0.0, (2.0f64 / 3.0).sqrt()])
}

/// Coordinates of the constant function `value`.
pub fn constant_coeffs(basis: &OrthonormalBasis, value: f64) -> Result<DVector<f64>> {
    basis.from_legendre(&[value * std::f64::consts::SQRT_2])
}

/// Parses constraint specs such as `pos,mono`, `bound=1` or
/// `deriv=0,sense=lower,r=absx,on=[-1,0]`.
///
/// Items are comma separated. Inside a general spec the keys `sense`, `r` and
/// `on` attach to the preceding `deriv`; bare numbers extend the `r` list.
/// `;` may also separate items.
pub fn parse_constraints(spec: &str, basis: &OrthonormalBasis) -> Result<ConstraintSet> {
    let n = basis.dim();
    let mut families = Vec::new();
    let mut general: Option<GeneralSpec> = None;
    let bad = |msg: String| Error::InvalidArgument(msg);

    for token in split_top_level(spec) {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let (key, value) = match token.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v.trim())),
            None => (token, None),
        };
        match (key, value) {
            ("sense", Some(v)) | ("r", Some(v)) | ("on", Some(v)) => {
                let g = general
                    .as_mut()
                    .ok_or_else(|| bad(format!("`{key}=` must follow `deriv=`")))?;
                match key {
                    "sense" => {
                        g.sense = Some(match v {
                            "lower" => Sense::Lower,
                            "upper" => Sense::Upper,
                            _ => return Err(bad(format!("unknown sense `{v}`"))),
                        })
                    }
                    "r" => g.r.push(v.to_string()),
                    _ => g.on = Some(parse_interval(v)?),
                }
                continue;
            }
            (_, None) if key.parse::<f64>().is_ok() => {
                match general.as_mut() {
                    Some(g) if !g.r.is_empty() && g.on.is_none() => g.r.push(key.to_string()),
                    _ => return Err(bad(format!("stray number `{key}` in constraint spec"))),
                }
                continue;
            }
            _ => {}
        }
        if let Some(g) = general.take() {
            families.push(g.finish(basis)?);
        }
        let fam = match (key, value) {
            ("pos", None) => ConstraintFamily::zero_bound(n, 0, Sense::Lower),
            ("mono", None) => ConstraintFamily::zero_bound(n, 1, Sense::Lower),
            ("convex", None) => ConstraintFamily::zero_bound(n, 2, Sense::Lower),
            ("bound", Some(v)) => {
                let c: f64 = v
                    .parse()
                    .map_err(|_| bad(format!("bad bound value `{v}`")))?;
                ConstraintFamily {
                    bound_coeffs: constant_coeffs(basis, c)?,
                    ..ConstraintFamily::zero_bound(n, 0, Sense::Upper)
                }
            }
            ("deriv", Some(v)) => {
                let m: usize = v
                    .parse()
                    .map_err(|_| bad(format!("bad derivative order `{v}`")))?;
                if m > crate::basis::MAX_EVAL_DERIV {
                    return Err(Error::Unsupported(format!("derivative order {m}")));
                }
                general = Some(GeneralSpec {
                    deriv: m,
                    sense: None,
                    r: Vec::new(),
                    on: None,
                });
                continue;
            }
            _ => return Err(bad(format!("unknown constraint `{token}`"))),
        };
        families.push(fam);
    }
    if let Some(g) = general.take() {
        families.push(g.finish(basis)?);
    }
    ConstraintSet::new(families)
}

struct GeneralSpec {
    deriv: usize,
    sense: Option<Sense>,
    r: Vec<String>,
    on: Option<(f64, f64)>,
}

impl GeneralSpec {
    fn finish(self, basis: &OrthonormalBasis) -> Result<ConstraintFamily> {
        let sense = self
            .sense
            .ok_or_else(|| Error::InvalidArgument("general constraint needs `sense=`".into()))?;
        let (lo, hi) = self.on.unwrap_or((-1.0, 1.0));
        let bound = if self.r.is_empty() {
            DVector::zeros(basis.dim())
        } else if self.r.len() == 1 && self.r[0] == "absx" {
            if hi <= 0.0 {
                -identity_coeffs(basis)?
            } else if lo >= 0.0 {
                identity_coeffs(basis)?
            } else {
                return Err(Error::InvalidArgument(
                    "`r=absx` needs a domain on one side of 0".into(),
                ));
            }
        } else {
            let legendre = self
                .r
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("bad coefficient `{s}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            basis.from_legendre(&legendre)?
        };
        ConstraintFamily::new(self.deriv, sense, bound, vec![(lo, hi)])
    }
}

fn split_top_level(spec: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in spec.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' | ';' if depth == 0 => {
                out.push(&spec[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&spec[start..]);
    out
}

fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::InvalidArgument(format!("bad interval `{s}`, expected [a,b]"));
    let inner = s
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(bad)?;
    let (a, b) = inner.split_once(',').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}
