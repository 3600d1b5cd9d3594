//! Data functionals, design matrices and unconstrained fits that seed the
//! constrained solver.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::basis::{inner_product, BasisElement, Function1D, OrthonormalBasis};
use crate::{Error, Result};

/// Relative singular value threshold for numerical full rank.
pub const RANK_TOL: f64 = 1e-10;

/// A linear datum φ(u): a point value or an H inner product with a function.
#[derive(Clone)]
pub enum DataFunctional {
    PointEval(f64),
    HInner(Arc<dyn Function1D + Send>),
}

impl std::fmt::Debug for DataFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataFunctional::PointEval(x) => write!(f, "PointEval({x})"),
            DataFunctional::HInner(_) => f.write_str("HInner(..)"),
        }
    }
}

impl DataFunctional {
    pub fn apply(&self, u: &dyn Function1D, basis: &OrthonormalBasis) -> Result<f64> {
        match self {
            DataFunctional::PointEval(x) => {
                if !(-1.0..=1.0).contains(x) {
                    return Err(Error::InvalidArgument(format!(
                        "evaluation point {x} outside [-1, 1]"
                    )));
                }
                u.eval(*x, 0)
            }
            DataFunctional::HInner(f) => inner_product(f.as_ref(), u, basis.space()),
        }
    }
}

/// (A)_{m,n} = φ_m(v_n).
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub entries: DMatrix<f64>,
    pub rank_ok: bool,
}

/// Reduced factorisation A = U Σ Vᵀ of a full-column-rank matrix.
#[derive(Debug, Clone)]
pub struct SvdContext {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// H-orthogonal projection of `f` onto span(basis): b_j = ⟨f, v_j⟩_H.
pub fn best_projection(f: &dyn Function1D, basis: &OrthonormalBasis) -> Result<DVector<f64>> {
    let n = basis.dim();
    let mut b = DVector::zeros(n);
    for j in 0..n {
        b[j] = inner_product(f, &BasisElement::unit(basis, j), basis.space())?;
    }
    Ok(b)
}

fn rank_ratio(a: &DMatrix<f64>) -> f64 {
    if a.nrows() < a.ncols() {
        return 0.0;
    }
    let s = a.singular_values();
    let max = s.amax();
    if max == 0.0 || !max.is_finite() {
        return 0.0;
    }
    s.min() / max
}

pub fn design_matrix(
    functionals: &[DataFunctional],
    basis: &OrthonormalBasis,
) -> Result<DesignMatrix> {
    if functionals.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one functional is required".into(),
        ));
    }
    let n = basis.dim();
    let mut entries = DMatrix::zeros(functionals.len(), n);
    for j in 0..n {
        let v = BasisElement::unit(basis, j);
        for (m, phi) in functionals.iter().enumerate() {
            entries[(m, j)] = phi.apply(&v, basis)?;
        }
    }
    let rank_ok = rank_ratio(&entries) > RANK_TOL;
    Ok(DesignMatrix { entries, rank_ok })
}

pub fn svd_context(a: &DesignMatrix) -> Result<SvdContext> {
    let ratio = rank_ratio(&a.entries);
    if !(a.rank_ok && ratio > RANK_TOL) {
        return Err(Error::RankDeficient { ratio });
    }
    let svd = a.entries.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::NumericFailure("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::NumericFailure("SVD did not return V".into()))?;
    Ok(SvdContext {
        u,
        sigma: svd.singular_values,
        v: v_t.transpose(),
    })
}

/// argmin ‖A c - b‖₂ through the reduced SVD: c = V Σ⁻¹ Uᵀ b.
pub fn unconstrained_lsq(a: &DesignMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != a.entries.nrows() {
        return Err(Error::InvalidArgument(format!(
            "data vector has length {}, design matrix has {} rows",
            b.len(),
            a.entries.nrows()
        )));
    }
    let svd = svd_context(a)?;
    let mut y = svd.u.tr_mul(b);
    y.component_div_assign(&svd.sigma);
    Ok(&svd.v * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{cached_gauss_rule, sobolev_orthonormalize};
    use ::approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Const(f64);
    impl Function1D for Const {
        fn eval(&self, _x: f64, deriv: usize) -> Result<f64> {
            Ok(if deriv == 0 { self.0 } else { 0.0 })
        }
        fn piecewise_degree(&self) -> Option<usize> {
            Some(0)
        }
    }

    struct Step;
    impl Function1D for Step {
        fn eval(&self, x: f64, _deriv: usize) -> Result<f64> {
            Ok(if x > 0.0 { 1.0 } else { 0.0 })
        }
        fn breakpoints(&self) -> Vec<f64> {
            vec![0.0]
        }
        fn piecewise_degree(&self) -> Option<usize> {
            Some(0)
        }
    }

    fn dm(entries: DMatrix<f64>) -> DesignMatrix {
        let rank_ok = rank_ratio(&entries) > RANK_TOL;
        DesignMatrix { entries, rank_ok }
    }

    #[test]
    fn projection_examples() {
        let b1 = sobolev_orthonormalize(0, 1).unwrap();
        assert_abs_diff_eq!(
            best_projection(&Const(1.0), &b1).unwrap()[0],
            2f64.sqrt(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            best_projection(&Step, &b1).unwrap()[0],
            0.5f64.sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn projection_reproduces_subspace_elements() {
        for q in 0..=2 {
            let b = sobolev_orthonormalize(q, 7).unwrap();
            let c = DVector::from_fn(7, |i, _| (i as f64 - 3.0) / 4.0);
            let got = best_projection(&BasisElement::new(&b, &c), &b).unwrap();
            assert!((got - &c).amax() <= 1e-12, "q = {q}");
        }
    }

    #[test]
    fn projection_residual_is_orthogonal() {
        let b = sobolev_orthonormalize(0, 6).unwrap();
        let c = best_projection(&Step, &b).unwrap();
        let v = BasisElement::new(&b, &c);
        for j in 0..6 {
            let r = inner_product(&Step, &BasisElement::unit(&b, j), b.space()).unwrap()
                - inner_product(&v, &BasisElement::unit(&b, j), b.space()).unwrap();
            assert!(r.abs() <= 1e-9);
        }
    }

    #[test]
    fn design_matrix_examples() {
        let b = sobolev_orthonormalize(0, 5).unwrap();
        let rule = cached_gauss_rule(5).unwrap();
        let phis: Vec<_> = rule
            .nodes
            .iter()
            .map(|&x| DataFunctional::PointEval(x))
            .collect();
        assert!(design_matrix(&phis, &b).unwrap().rank_ok);

        let b2 = sobolev_orthonormalize(0, 2).unwrap();
        assert!(
            !design_matrix(&[DataFunctional::PointEval(0.3)], &b2)
                .unwrap()
                .rank_ok
        );

        let b1 = sobolev_orthonormalize(0, 1).unwrap();
        let a = design_matrix(&[DataFunctional::PointEval(0.0)], &b1).unwrap();
        assert_abs_diff_eq!(a.entries[(0, 0)], 0.5f64.sqrt(), epsilon = 1e-15);
        assert!(design_matrix(&[], &b1).is_err());
        assert!(design_matrix(&[DataFunctional::PointEval(1.5)], &b1).is_err());
    }

    #[test]
    fn inner_functionals_give_gram_matrix() {
        let b = sobolev_orthonormalize(1, 4).unwrap();
        let phis: Vec<_> = (0..4)
            .map(|j| {
                let mut e = DVector::zeros(4);
                e[j] = 1.0;
                let legendre: Vec<f64> = b.to_legendre(&e).iter().copied().collect();
                DataFunctional::HInner(Arc::new(LegendreSeries(legendre)))
            })
            .collect();
        let a = design_matrix(&phis, &b).unwrap();
        assert!((a.entries - DMatrix::identity(4, 4)).amax() <= 1e-12);
    }

    struct LegendreSeries(Vec<f64>);
    impl Function1D for LegendreSeries {
        fn eval(&self, x: f64, deriv: usize) -> Result<f64> {
            let d = crate::basis::legendre_derivatives(x, self.0.len(), deriv);
            Ok(self.0.iter().zip(&d[deriv]).map(|(c, p)| c * p).sum())
        }
        fn piecewise_degree(&self) -> Option<usize> {
            Some(self.0.len() - 1)
        }
    }

    #[test]
    fn lsq_examples() {
        let a = dm(DMatrix::identity(3, 3));
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_abs_diff_eq!(
            (unconstrained_lsq(&a, &b).unwrap() - &b).amax(),
            0.0,
            epsilon = 1e-15
        );

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = dm(DMatrix::from_fn(9, 4, |_, _| rng.gen_range(-1.0..1.0)));
        let c_star = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let exact = &a.entries * &c_star;
        assert!((unconstrained_lsq(&a, &exact).unwrap() - &c_star).amax() <= 1e-10);

        let noisy = exact.map(|v| v + rng.gen_range(-0.1..0.1));
        let got = unconstrained_lsq(&a, &noisy).unwrap();
        let ata = a.entries.tr_mul(&a.entries);
        let normal = ata.cholesky().unwrap().solve(&a.entries.tr_mul(&noisy));
        assert!((&got - normal).amax() <= 1e-8);

        let residual = &noisy - &a.entries * &got;
        assert!(a.entries.tr_mul(&residual).amax() <= 1e-10);

        let base = (&a.entries * &got - &noisy).norm();
        for i in 0..4 {
            for s in [-1e-4, 1e-4] {
                let mut c = got.clone();
                c[i] += s;
                assert!((&a.entries * c - &noisy).norm() >= base);
            }
        }
    }

    #[test]
    fn lsq_rejects_rank_deficient() {
        let a = dm(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        assert!(!a.rank_ok);
        assert!(matches!(
            unconstrained_lsq(&a, &DVector::zeros(2)),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn svd_examples() {
        let s = svd_context(&dm(DMatrix::identity(3, 3))).unwrap();
        assert_abs_diff_eq!(
            (s.sigma - DVector::from_element(3, 1.0)).amax(),
            0.0,
            epsilon = 1e-15
        );

        let s = svd_context(&dm(DMatrix::from_diagonal(&DVector::from_vec(vec![
            3.0, 1.0,
        ]))))
        .unwrap();
        let mut sv: Vec<f64> = s.sigma.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert_abs_diff_eq!(sv[0], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sv[1], 1.0, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(10, 4, |_, _| rng.gen_range(-1.0..1.0));
        let s = svd_context(&dm(a.clone())).unwrap();
        let rebuilt = &s.u * DMatrix::from_diagonal(&s.sigma) * s.v.transpose();
        assert!((rebuilt - &a).norm() <= 1e-10 * a.norm());
        assert!((s.u.tr_mul(&s.u) - DMatrix::identity(4, 4)).amax() <= 1e-12);
        assert!((s.v.tr_mul(&s.v) - DMatrix::identity(4, 4)).amax() <= 1e-12);
    }
}
