//! Orthonormal polynomial bases on [-1, 1] and Gauss quadrature.
//!
//! The L²-orthonormal Legendre family p_0, p_1, ... is generated by the
//! three-term recurrence
//!
//! ```text
//! x p_n(x) = b_{n+1} p_{n+1}(x) + a_{n+1} p_n(x) + b_n p_{n-1}(x),   p_0 = 1/√2
//! ```
//!
//! with a_n = 0 and b_n = n / √(4n² - 1). Sobolev-orthonormal families are
//! obtained from it by a lower-triangular change of basis.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Highest derivative order accepted by [`OrthonormalBasis::eval`].
pub const MAX_EVAL_DERIV: usize = 2;

/// Selects the ambient Hilbert space H^q on [-1, 1].
///
/// The norm is the unweighted sum Σ_{j=0}^{q} ∫ [f^{(j)}]² dx; q = 0 is L².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct InnerProductSpec {
    sobolev_order: usize,
}

impl InnerProductSpec {
    pub fn new(sobolev_order: usize) -> Result<Self> {
        if sobolev_order > 2 {
            return Err(Error::Unsupported(format!(
                "Sobolev order {sobolev_order} (only 0, 1, 2 are supported)"
            )));
        }
        Ok(Self { sobolev_order })
    }

    pub fn l2() -> Self {
        Self { sobolev_order: 0 }
    }

    pub fn sobolev_order(&self) -> usize {
        self.sobolev_order
    }

    /// Short name used by the CLI and in reports: `l2`, `h1`, `h2`.
    pub fn name(&self) -> &'static str {
        match self.sobolev_order {
            0 => "l2",
            1 => "h1",
            _ => "h2",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "l2" | "h0" => Ok(Self::l2()),
            "h1" => Self::new(1),
            "h2" => Self::new(2),
            other => Err(Error::InvalidArgument(format!("unknown space `{other}`"))),
        }
    }
}

/// Jacobi-matrix entries of an orthonormal polynomial family.
///
/// `a[n]` and `b[n]` hold a_n and b_n for n = 0..=n_max. The b_0 slot is the
/// square root of the total mass of the measure, so that p_0 = 1 / b_0.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl RecurrenceCoefficients {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Constant value of the degree-zero polynomial.
    pub fn p0(&self) -> f64 {
        1.0 / self.b[0]
    }

    /// Symmetric tridiagonal Jacobi matrix of size `size` (diagonal a_1..a_size,
    /// off-diagonal b_1..b_{size-1}).
    pub fn jacobi_matrix(&self, size: usize) -> DMatrix<f64> {
        assert!(size < self.len(), "recurrence too short for Jacobi matrix");
        let mut j = DMatrix::zeros(size, size);
        for i in 0..size {
            j[(i, i)] = self.a[i + 1];
            if i + 1 < size {
                j[(i, i + 1)] = self.b[i + 1];
                j[(i + 1, i)] = self.b[i + 1];
            }
        }
        j
    }
}

/// Legendre b_n for the unweighted measure on [-1, 1].
#[inline]
pub fn legendre_b(n: usize) -> f64 {
    if n == 0 {
        std::f64::consts::SQRT_2
    } else {
        let n = n as f64;
        n / (4.0 * n * n - 1.0).sqrt()
    }
}

pub fn legendre_recurrence(n_max: usize) -> Result<RecurrenceCoefficients> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    Ok(RecurrenceCoefficients {
        a: vec![0.0; n_max + 1],
        b: (0..=n_max).map(legendre_b).collect(),
    })
}

/// Values and derivatives of the first `n` orthonormal Legendre polynomials.
///
/// Returns `out` with `out[k][j] = p_j^{(k)}(x)` for k = 0..=max_order.
/// Derivatives follow from differentiating the recurrence:
/// b_{n+1} p_{n+1}^{(k)} = x p_n^{(k)} + k p_n^{(k-1)} - b_n p_{n-1}^{(k)}.
pub fn legendre_derivatives(x: f64, n: usize, max_order: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n]; max_order + 1];
    if n == 0 {
        return out;
    }
    out[0][0] = 1.0 / legendre_b(0);
    for j in 0..n - 1 {
        let b_next = legendre_b(j + 1);
        let b_cur = if j == 0 { 0.0 } else { legendre_b(j) };
        for k in 0..=max_order {
            let prev = if j == 0 { 0.0 } else { out[k][j - 1] };
            let lower = if k == 0 {
                0.0
            } else {
                k as f64 * out[k - 1][j]
            };
            out[k][j + 1] = (x * out[k][j] + lower - b_cur * prev) / b_next;
        }
    }
    out
}

/// Values of the orthonormal Legendre polynomials p_0..p_{n-1} at `x`.
pub fn legendre_values(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    out[0] = 1.0 / legendre_b(0);
    if n > 1 {
        out[1] = x * out[0] / legendre_b(1);
    }
    for j in 1..n.saturating_sub(1) {
        out[j + 1] = (x * out[j] - legendre_b(j) * out[j - 1]) / legendre_b(j + 1);
    }
    out
}

/// Evaluates Σ_j coeffs[j] p_j(x) and its first derivative.
pub fn legendre_series_with_derivative(coeffs: &[f64], x: f64) -> (f64, f64) {
    let d = legendre_derivatives(x, coeffs.len(), 1);
    let v = coeffs.iter().zip(&d[0]).map(|(c, p)| c * p).sum();
    let dv = coeffs.iter().zip(&d[1]).map(|(c, p)| c * p).sum();
    (v, dv)
}

pub fn legendre_series(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .zip(legendre_values(x, coeffs.len()))
        .map(|(c, p)| c * p)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights affinely mapped from [-1, 1] onto [lo, hi].
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        self.mapped(lo, hi).map(|(x, w)| w * f(x)).sum()
    }
}

/// M-point Gauss–Legendre rule by the Golub–Welsch eigenvalue method.
pub fn gauss_quadrature(m: usize) -> Result<QuadratureRule> {
    if m < 1 {
        return Err(Error::InvalidArgument(
            "quadrature size must be at least 1".into(),
        ));
    }
    let rec = legendre_recurrence(m)?;
    let jac = rec.jacobi_matrix(m);
    let eig = nalgebra::SymmetricEigen::try_new(jac, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericFailure(format!("Jacobi eigensolver failed for M = {m}")))?;
    let mass = rec.b[0] * rec.b[0];
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mass * v0 * v0)
        })
        .collect();
    if pairs.iter().any(|(x, w)| !x.is_finite() || !w.is_finite()) {
        return Err(Error::NumericFailure(format!(
            "non-finite Gauss rule for M = {m}"
        )));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize: the Legendre rule is exactly symmetric about 0.
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if m % 2 == 1 {
        pairs[m / 2].0 = 0.0;
    }
    Ok(QuadratureRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Process-wide cache of Gauss rules; rules are immutable once built.
pub fn cached_gauss_rule(m: usize) -> Result<Arc<QuadratureRule>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&m) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(gauss_quadrature(m)?);
    cache
        .lock()
        .expect("quadrature cache poisoned")
        .insert(m, rule.clone());
    Ok(rule)
}

/// H^q-orthonormal basis of the polynomials of degree < `dim`.
///
/// Row j of `change_of_basis` holds the Legendre coordinates of v_{j+1}:
/// v_{j+1} = Σ_k C[j, k] p_k. The matrix is lower triangular so the family
/// stays degree graded.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    dim: usize,
    space: InnerProductSpec,
    rec: RecurrenceCoefficients,
    change_of_basis: DMatrix<f64>,
}

impl OrthonormalBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn space(&self) -> InnerProductSpec {
        self.space
    }

    pub fn recurrence(&self) -> &RecurrenceCoefficients {
        &self.rec
    }

    pub fn change_of_basis(&self) -> &DMatrix<f64> {
        &self.change_of_basis
    }

    /// (v_1^{(deriv)}(x), ..., v_N^{(deriv)}(x)).
    pub fn eval(&self, x: f64, deriv_order: usize) -> Result<DVector<f64>> {
        if deriv_order > MAX_EVAL_DERIV {
            return Err(Error::Unsupported(format!(
                "derivative order {deriv_order} (at most {MAX_EVAL_DERIV})"
            )));
        }
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::InvalidArgument(format!("x = {x} outside [-1, 1]")));
        }
        Ok(self.eval_orders(x, deriv_order).swap_remove(deriv_order))
    }

    /// All derivatives 0..=max_order at `x`, without range checks. Orders above
    /// [`MAX_EVAL_DERIV`] are needed internally for critical-point polynomials.
    pub(crate) fn eval_orders(&self, x: f64, max_order: usize) -> Vec<DVector<f64>> {
        legendre_derivatives(x, self.dim, max_order)
            .into_iter()
            .map(|p| &self.change_of_basis * DVector::from_vec(p))
            .collect()
    }

    /// Legendre coordinates a = Cᵀ c of the element with basis coordinates c.
    pub fn to_legendre(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        self.change_of_basis.tr_mul(coeffs)
    }

    /// Inverse of [`Self::to_legendre`]; `legendre` may be shorter than N.
    pub fn from_legendre(&self, legendre: &[f64]) -> Result<DVector<f64>> {
        if legendre.len() > self.dim {
            return Err(Error::InvalidArgument(format!(
                "{} Legendre coefficients do not fit a basis of dimension {}",
                legendre.len(),
                self.dim
            )));
        }
        let mut a = DVector::zeros(self.dim);
        a.rows_mut(0, legendre.len()).copy_from_slice(legendre);
        let ct = self.change_of_basis.transpose();
        ct.solve_upper_triangular(&a)
            .ok_or_else(|| Error::NumericFailure("singular change of basis".into()))
    }

    /// Evaluates the element with coordinates `coeffs` (or its derivative).
    pub fn eval_element(&self, coeffs: &DVector<f64>, x: f64, deriv_order: usize) -> f64 {
        let a = self.to_legendre(coeffs);
        let d = legendre_derivatives(x, self.dim, deriv_order);
        a.iter().zip(&d[deriv_order]).map(|(c, p)| c * p).sum()
    }

    /// H^q Gram matrix of the basis, computed with an exact Gauss rule.
    pub fn gram_matrix(&self) -> Result<DMatrix<f64>> {
        let q = self.space.sobolev_order();
        let rule = cached_gauss_rule(self.dim + 1)?;
        let mut gram = DMatrix::zeros(self.dim, self.dim);
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            for v in self.eval_orders(x, q) {
                gram.ger(w, &v, &v, 1.0);
            }
        }
        Ok(gram)
    }
}

/// Builds the H^q-orthonormal basis of dimension `dim`.
///
/// The Legendre family is sampled (with derivatives up to q) at an exact Gauss
/// rule and the stacked, weight-scaled sample matrix is QR-factored. Its R
/// factor is the Cholesky factor of the H^q Gram matrix, so C = R^{-T} is the
/// lower-triangular change of basis.
pub fn sobolev_orthonormalize(q: usize, dim: usize) -> Result<OrthonormalBasis> {
    let space = InnerProductSpec::new(q)?;
    if dim < 1 {
        return Err(Error::InvalidArgument(
            "basis dimension must be at least 1".into(),
        ));
    }
    let rec = legendre_recurrence(dim)?;
    if q == 0 {
        return Ok(OrthonormalBasis {
            dim,
            space,
            rec,
            change_of_basis: DMatrix::identity(dim, dim),
        });
    }
    let rule = cached_gauss_rule(dim + 1)?;
    let m = rule.len();
    let mut samples = DMatrix::zeros((q + 1) * m, dim);
    for (i, (&x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let sw = w.sqrt();
        let d = legendre_derivatives(x, dim, q);
        for (order, row) in d.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                samples[(order * m + i, j)] = sw * p;
            }
        }
    }
    let mut r = samples.qr().r();
    let scale = r.diagonal().amax();
    for i in 0..dim {
        let rii = r[(i, i)];
        if rii.abs() <= 1e-14 * scale {
            return Err(Error::NumericFailure(format!(
                "H^{q} Gram matrix is not positive definite (pivot {i})"
            )));
        }
        if rii < 0.0 {
            r.row_mut(i).neg_mut();
        }
    }
    let lower = r.transpose();
    let change_of_basis = lower
        .solve_lower_triangular(&DMatrix::identity(dim, dim))
        .ok_or_else(|| Error::NumericFailure("singular Cholesky factor".into()))?;
    Ok(OrthonormalBasis {
        dim,
        space,
        rec,
        change_of_basis,
    })
}

/// A real function on [-1, 1] with derivatives, possibly only piecewise smooth.
pub trait Function1D: Sync {
    fn eval(&self, x: f64, deriv: usize) -> Result<f64>;

    /// Interior points where the function or a derivative has a kink or jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Polynomial degree on every smooth piece, when known.
    fn piecewise_degree(&self) -> Option<usize> {
        None
    }
}

/// An element of a basis, held by its coordinates.
pub struct BasisElement<'a> {
    pub basis: &'a OrthonormalBasis,
    legendre: Vec<f64>,
}

impl<'a> BasisElement<'a> {
    pub fn new(basis: &'a OrthonormalBasis, coeffs: &DVector<f64>) -> Self {
        Self {
            basis,
            legendre: basis.to_legendre(coeffs).iter().copied().collect(),
        }
    }

    pub fn unit(basis: &'a OrthonormalBasis, j: usize) -> Self {
        let mut e = DVector::zeros(basis.dim());
        e[j] = 1.0;
        Self::new(basis, &e)
    }
}

impl Function1D for BasisElement<'_> {
    fn eval(&self, x: f64, deriv: usize) -> Result<f64> {
        let d = legendre_derivatives(x, self.legendre.len(), deriv);
        Ok(self
            .legendre
            .iter()
            .zip(&d[deriv])
            .map(|(c, p)| c * p)
            .sum())
    }

    fn piecewise_degree(&self) -> Option<usize> {
        Some(self.basis.dim().saturating_sub(1))
    }
}

/// Pointwise difference f - g of two functions.
pub struct Difference<'a> {
    pub f: &'a dyn Function1D,
    pub g: &'a dyn Function1D,
}

impl Function1D for Difference<'_> {
    fn eval(&self, x: f64, deriv: usize) -> Result<f64> {
        Ok(self.f.eval(x, deriv)? - self.g.eval(x, deriv)?)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.f.breakpoints();
        b.extend(self.g.breakpoints());
        b
    }

    fn piecewise_degree(&self) -> Option<usize> {
        Some(self.f.piecewise_degree()?.max(self.g.piecewise_degree()?))
    }
}

/// Splits [-1, 1] at the given interior breakpoints.
pub(crate) fn pieces(mut breakpoints: Vec<f64>) -> Vec<(f64, f64)> {
    breakpoints.retain(|b| *b > -1.0 && *b < 1.0);
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let mut edges = vec![-1.0];
    edges.extend(breakpoints);
    edges.push(1.0);
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

const INNER_PRODUCT_RTOL: f64 = 1e-12;
const INNER_PRODUCT_MAX_POINTS: usize = 2048;

/// ⟨f, g⟩ in H^q by composite Gauss quadrature split at all breakpoints.
///
/// When both factors declare a piecewise polynomial degree the first rule is
/// already exact; otherwise the rule is doubled until two successive values
/// agree to 1e-12 relative.
pub fn inner_product(
    f: &dyn Function1D,
    g: &dyn Function1D,
    spec: InnerProductSpec,
) -> Result<f64> {
    let mut bps = f.breakpoints();
    bps.extend(g.breakpoints());
    let cells = pieces(bps);
    let q = spec.sobolev_order();

    let exact = match (f.piecewise_degree(), g.piecewise_degree()) {
        (Some(df), Some(dg)) => Some((df + dg) / 2 + 1),
        _ => None,
    };
    let mut m = exact.unwrap_or(16).max(2);

    let integrate = |m: usize| -> Result<f64> {
        let rule = cached_gauss_rule(m)?;
        let mut total = 0.0;
        for &(lo, hi) in &cells {
            for (x, w) in rule.mapped(lo, hi) {
                for j in 0..=q {
                    let val = f.eval(x, j)? * g.eval(x, j)?;
                    if !val.is_finite() {
                        return Err(Error::NumericFailure(format!(
                            "non-finite integrand at x = {x}"
                        )));
                    }
                    total += w * val;
                }
            }
        }
        Ok(total)
    };

    let mut prev = integrate(m)?;
    if exact.is_some() {
        return Ok(prev);
    }
    loop {
        m *= 2;
        let next = integrate(m)?;
        if (next - prev).abs() <= INNER_PRODUCT_RTOL * next.abs().max(1e-300)
            || (next - prev).abs() <= 1e-300
        {
            return Ok(next);
        }
        if m >= INNER_PRODUCT_MAX_POINTS {
            log::warn!(
                "inner product did not settle: last two refinements differ by {:e}",
                (next - prev).abs()
            );
            return Ok(next);
        }
        prev = next;
    }
}
