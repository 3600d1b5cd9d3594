//! Real roots of polynomials stored as orthonormal Legendre coefficients.
//!
//! Roots are eigenvalues of either the confederate matrix (built directly from
//! the Legendre coefficients) or the companion matrix of the monomial form,
//! whichever is better conditioned, followed by a short Newton polish.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::basis::{self, legendre_b};
use crate::eigen::eigenvalues_general_real;
use crate::error::{Error, Result};

/// Relative size below which trailing coefficients are treated as zero.
pub const DEGREE_TOL: f64 = 1e-14;
/// Eigenvalues with a larger imaginary part are not real roots.
pub const IMAG_TOL: f64 = 1e-8;
/// Eigenvalues this far outside the interval are clamped onto it.
pub const CLAMP_TOL: f64 = 1e-10;
/// Roots closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-9;
const NEWTON_STEPS: usize = 5;

/// A polynomial Σ_k coeffs[k] p_k(x) in the L²-orthonormal Legendre basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyInBasis {
    pub coeffs: Vec<f64>,
}

impl PolyInBasis {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// Index of the last coefficient that is not negligible relative to the
    /// largest one; `None` for the zero polynomial.
    pub fn effective_degree(&self) -> Option<usize> {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return None;
        }
        self.coeffs
            .iter()
            .rposition(|c| c.abs() > DEGREE_TOL * scale)
    }

    pub fn eval(&self, x: f64) -> f64 {
        basis::legendre_series(&self.coeffs, x)
    }

    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        basis::legendre_series_with_derivative(&self.coeffs, x)
    }

    /// Monomial coefficients (lowest order first) up to the effective degree.
    pub fn to_monomial(&self) -> Vec<f64> {
        let Some(deg) = self.effective_degree() else {
            return vec![0.0];
        };
        // monomial expansions of p_{k-1}, p_k, advanced by the recurrence
        let mut prev: Vec<f64> = Vec::new();
        let mut cur = vec![1.0 / legendre_b(0)];
        let mut out = vec![0.0; deg + 1];
        for k in 0..=deg {
            for (o, c) in out.iter_mut().zip(&cur) {
                *o += self.coeffs[k] * c;
            }
            if k == deg {
                break;
            }
            let mut next = vec![0.0; cur.len() + 1];
            for (i, c) in cur.iter().enumerate() {
                next[i + 1] += c;
            }
            if k > 0 {
                for (i, c) in prev.iter().enumerate() {
                    next[i] -= legendre_b(k) * c;
                }
            }
            let b = legendre_b(k + 1);
            next.iter_mut().for_each(|v| *v /= b);
            prev = std::mem::replace(&mut cur, next);
        }
        out
    }
}

/// Confederate matrix T = J - (b_n / c_n) e_n (c_0, ..., c_{n-1})ᵀ of a
/// degree-n polynomial; its eigenvalues are the polynomial's roots.
pub fn confederate_matrix(p: &PolyInBasis) -> Result<DMatrix<f64>> {
    let n = match p.effective_degree() {
        Some(d) if d >= 1 => d,
        _ => return Err(Error::NoRoots),
    };
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        if i + 1 < n {
            t[(i, i + 1)] = legendre_b(i + 1);
            t[(i + 1, i)] = legendre_b(i + 1);
        }
    }
    let scale = legendre_b(n) / p.coeffs[n];
    for j in 0..n {
        t[(n - 1, j)] -= scale * p.coeffs[j];
    }
    Ok(t)
}

/// Companion matrix of the monic monomial form of `p`.
pub fn companion_matrix(p: &PolyInBasis) -> Result<DMatrix<f64>> {
    let mono = p.to_monomial();
    let n = mono.len() - 1;
    if n == 0 || mono[n] == 0.0 {
        return Err(Error::NoRoots);
    }
    let mut c = DMatrix::zeros(n, n);
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        c[(i, n - 1)] = -mono[i] / mono[n];
    }
    Ok(c)
}

/// 1-norm condition number ‖A‖₁‖A⁻¹‖₁ (infinite for singular or non-finite A).
pub fn condition_1norm(a: &DMatrix<f64>) -> f64 {
    if a.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let norm1 = |m: &DMatrix<f64>| {
        m.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match a.clone().try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => norm1(a) * norm1(&inv),
        _ => f64::INFINITY,
    }
}

/// Cheap estimate of the 1-norm condition number from one LU factorisation
/// (Hager's method). Never larger than the exact value and usually within a
/// small factor of it.
pub fn condition_1norm_estimate(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 || a.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let norm1 = a
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let lu = a.clone().lu();
    let l = lu.l();
    let u = lu.u();
    if u.diagonal().iter().any(|&d| d == 0.0) {
        return f64::INFINITY;
    }
    let p = lu.p();
    let solve = |b: &DVector<f64>| lu.solve(b);
    // Aᵀx = b with PA = LU: Uᵀz = b, Lᵀw = z, x = Pᵀw.
    let solve_tr = |b: &DVector<f64>| -> Option<DVector<f64>> {
        let z = u.tr_solve_upper_triangular(b)?;
        let mut w = l.tr_solve_lower_triangular(&z)?;
        p.inv_permute_rows(&mut w);
        Some(w)
    };

    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0_f64;
    for iter in 0..5 {
        let Some(y) = solve(&x) else {
            return f64::INFINITY;
        };
        est = est.max(y.iter().map(|v| v.abs()).sum::<f64>());
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let Some(z) = solve_tr(&xi) else {
            return f64::INFINITY;
        };
        let j = z.iamax();
        if iter > 0 && z[j].abs() <= z.dot(&x) {
            break;
        }
        x.fill(0.0);
        x[j] = 1.0;
    }
    let alt = DVector::from_fn(n, |i, _| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
    });
    if let Some(y) = solve(&alt) {
        est = est.max(2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64));
    }
    if est.is_finite() {
        norm1 * est
    } else {
        f64::INFINITY
    }
}

/// Which root-finding matrix was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootMatrix {
    Confederate,
    Companion,
}

/// Full complex spectrum of the better-conditioned root-finding matrix.
pub fn all_roots(p: &PolyInBasis) -> Result<(Vec<Complex64>, RootMatrix)> {
    let conf = confederate_matrix(p)?;
    let comp = companion_matrix(p).ok();
    let conf_cond = condition_1norm_estimate(&conf);
    if let Some(comp) = comp {
        let comp_cond = condition_1norm_estimate(&comp);
        if comp_cond < conf_cond {
            return Ok((eigenvalues_general_real(&comp)?, RootMatrix::Companion));
        }
    }
    Ok((eigenvalues_general_real(&conf)?, RootMatrix::Confederate))
}

fn newton_polish(p: &PolyInBasis, mut x: f64, lo: f64, hi: f64) -> f64 {
    let (mut fx, mut dfx) = p.eval_with_derivative(x);
    for _ in 0..NEWTON_STEPS {
        if fx == 0.0 || dfx == 0.0 || !dfx.is_finite() {
            break;
        }
        let cand = x - fx / dfx;
        if !(lo..=hi).contains(&cand) {
            break;
        }
        let (fc, dfc) = p.eval_with_derivative(cand);
        if fc.abs() >= fx.abs() {
            break;
        }
        x = cand;
        fx = fc;
        dfx = dfc;
    }
    x
}

/// Points in [lo, hi] that are (nearly) real roots of `p`.
///
/// Eigenvalues with |Im| ≤ `imag_tol` and real part within [`CLAMP_TOL`] of the
/// interval are clamped, Newton-polished, sorted and deduplicated.
pub fn real_roots_with_tolerance(
    p: &PolyInBasis,
    lo: f64,
    hi: f64,
    imag_tol: f64,
) -> Result<Vec<f64>> {
    if lo > hi {
        return Err(Error::InvalidArgument(format!(
            "empty interval [{lo}, {hi}]"
        )));
    }
    let roots = match all_roots(p) {
        Ok((r, _)) => r,
        Err(Error::NoRoots) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out: Vec<f64> = roots
        .into_iter()
        .filter(|z| z.im.abs() <= imag_tol)
        .filter(|z| z.re >= lo - CLAMP_TOL && z.re <= hi + CLAMP_TOL)
        .map(|z| newton_polish(p, z.re.clamp(lo, hi), lo, hi))
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= DEDUP_TOL);
    Ok(out)
}

/// Real roots of `p` in [lo, hi] ⊆ [-1, 1], sorted ascending.
pub fn real_roots_in_interval(p: &PolyInBasis, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if lo < -1.0 || hi > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "[{lo}, {hi}] is not contained in [-1, 1]"
        )));
    }
    real_roots_with_tolerance(p, lo, hi, IMAG_TOL)
}

/// Sign of a polynomial on the cells of a partition of [lo, hi].
#[derive(Debug, Clone, PartialEq)]
pub struct SignPartition {
    pub breakpoints: Vec<f64>,
    pub signs: Vec<i8>,
}

impl SignPartition {
    pub fn cells(&self) -> impl Iterator<Item = ((f64, f64), i8)> + '_ {
        self.breakpoints
            .windows(2)
            .map(|w| (w[0], w[1]))
            .zip(self.signs.iter().copied())
    }
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Cells narrower than this whose sign is lost in rounding are merged away.
const NOISE_CELL_WIDTH: f64 = 1e-6;

fn abs_series(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .zip(basis::legendre_values(x, coeffs.len()))
        .map(|(c, p)| (c * p).abs())
        .sum()
}

pub fn sign_partition(p: &PolyInBasis, lo: f64, hi: f64) -> Result<SignPartition> {
    let roots = real_roots_in_interval(p, lo, hi)?;
    let mut edges = vec![lo];
    for r in roots {
        if r > *edges.last().unwrap() && r < hi {
            edges.push(r);
        }
    }
    edges.push(hi);

    // Cells between split copies of a multiple root carry only rounding noise;
    // they are folded into their left neighbour.
    let mut raw: Vec<((f64, f64), i8)> = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let v = p.eval(mid);
        let noise = 64.0 * f64::EPSILON * abs_series(&p.coeffs, mid);
        let s = if v.abs() <= noise { 0 } else { sign_of(v) };
        if s == 0 && w[1] - w[0] < NOISE_CELL_WIDTH && !raw.is_empty() {
            raw.last_mut().unwrap().0 .1 = w[1];
        } else {
            raw.push(((w[0], w[1]), s));
        }
    }

    let mut breakpoints = vec![lo];
    let mut signs: Vec<i8> = Vec::new();
    for ((_, b), s) in raw {
        if signs.last() == Some(&s) {
            *breakpoints.last_mut().unwrap() = b;
        } else {
            signs.push(s);
            breakpoints.push(b);
        }
    }
    Ok(SignPartition { breakpoints, signs })
}
