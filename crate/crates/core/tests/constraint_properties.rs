use nalgebra::DVector;
use proptest::prelude::*;

use conform::basis::{sobolev_orthonormalize, OrthonormalBasis};
use conform::constraints::{
    constant_coeffs, min_sdist_global, riesz_coeffs, sdist, violation_set, ConstraintFamily,
    ConstraintSet, Sense,
};
use conform::solver::{greedy_solve, SolverConfig, Termination};

const GRID: usize = 10_001;

fn grid(points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |i| -1.0 + 2.0 * i as f64 / (points - 1) as f64)
}

#[derive(Debug, Clone)]
struct Setup {
    q: usize,
    dim: usize,
    deriv: usize,
    lower: bool,
    bound: Vec<f64>,
    domain: (f64, f64),
    c: Vec<f64>,
}

impl Setup {
    fn basis(&self) -> OrthonormalBasis {
        sobolev_orthonormalize(self.q, self.dim).unwrap()
    }

    fn family(&self) -> ConstraintFamily {
        let sense = if self.lower {
            Sense::Lower
        } else {
            Sense::Upper
        };
        ConstraintFamily::new(
            self.deriv,
            sense,
            DVector::from_column_slice(&self.bound),
            vec![self.domain],
        )
        .unwrap()
    }

    fn coeffs(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.c)
    }

    fn sample_y(&self, t: f64) -> f64 {
        self.domain.0 + t * (self.domain.1 - self.domain.0)
    }
}

fn setup() -> impl Strategy<Value = Setup> {
    (
        0usize..=1,
        3usize..=12,
        0usize..=2,
        any::<bool>(),
        any::<bool>(),
    )
        .prop_flat_map(|(q, dim, deriv, lower, full)| {
            let deriv = deriv.min(dim - 2);
            let domain = if full {
                Just((-1.0, 1.0)).boxed()
            } else {
                (-1.0f64..0.5, 0.1f64..1.0)
                    .prop_map(|(lo, w)| (lo, (lo + w).min(1.0)))
                    .boxed()
            };
            (
                Just(q),
                Just(dim),
                Just(deriv),
                Just(lower),
                proptest::collection::vec(-0.3f64..0.3, dim),
                domain,
                proptest::collection::vec(-1.0f64..1.0, dim),
            )
        })
        .prop_map(|(q, dim, deriv, lower, bound, domain, c)| Setup {
            q,
            dim,
            deriv,
            lower,
            bound,
            domain,
            c,
        })
}

/// A point of the set: the greedy output for a random start, when it certifies.
fn feasible_point(
    c0: &DVector<f64>,
    set: &ConstraintSet,
    basis: &OrthonormalBasis,
) -> Option<DVector<f64>> {
    let cfg = SolverConfig {
        max_iters: 2_000,
        ..SolverConfig::default()
    };
    let out = greedy_solve(c0, set, &cfg, basis).ok()?;
    (out.terminated == Termination::Feasible).then_some(out.coeffs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn representors_have_unit_norm(s in setup(), ts in proptest::collection::vec(0.0f64..=1.0, 5)) {
        let basis = s.basis();
        let fam = s.family();
        for t in ts {
            let frame = riesz_coeffs(&fam, s.sample_y(t), &basis).unwrap();
            prop_assert!((frame.ell_hat.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sign_of_sdist_matches_pointwise_constraint(
        s in setup(),
        ts in proptest::collection::vec(0.0f64..=1.0, 5),
    ) {
        let basis = s.basis();
        let fam = s.family();
        let c = s.coeffs();
        let r = s.family().bound_coeffs;
        for t in ts {
            let y = s.sample_y(t);
            let v = basis.eval_element(&c, y, s.deriv);
            let rv = basis.eval_element(&r, y, s.deriv);
            if (v - rv).abs() < 1e-12 {
                continue;
            }
            let violated = if s.lower { v < rv } else { v > rv };
            let d = sdist(&c, &fam, y, &basis).unwrap();
            prop_assert_eq!(d < 0.0, violated, "y = {}, v = {}, r = {}, sdist = {}", y, v, rv, d);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn global_minimum_lower_bounds_the_grid(s in setup()) {
        let basis = s.basis();
        let fam = s.family();
        let set = ConstraintSet::new(vec![fam.clone()]).unwrap();
        let c = s.coeffs();
        let worst = min_sdist_global(&c, &set, &basis).unwrap();
        let grid_min = grid(GRID)
            .filter(|&y| fam.contains(y))
            .map(|y| sdist(&c, &fam, y, &basis).unwrap())
            .fold(f64::INFINITY, f64::min);
        prop_assert!(grid_min >= worst.value - 1e-7, "grid {} vs global {}", grid_min, worst.value);
    }

    #[test]
    fn violation_set_covers_violated_grid_points(s in setup()) {
        let basis = s.basis();
        let fam = s.family();
        let c = s.coeffs();
        let cells = violation_set(&c, &fam, &basis).unwrap();
        for y in grid(GRID).filter(|&y| fam.contains(y)) {
            if sdist(&c, &fam, y, &basis).unwrap() < -1e-9 {
                prop_assert!(
                    cells.iter().any(|&(a, b)| y >= a - 1e-7 && y <= b + 1e-7),
                    "y = {} violated but outside {:?}", y, cells
                );
            }
        }
    }

    #[test]
    fn feasible_set_is_a_cone_at_the_bound(s in setup()) {
        let basis = s.basis();
        let set = ConstraintSet::new(vec![s.family()]).unwrap();
        let r = s.family().bound_coeffs;
        let Some(c) = feasible_point(&s.coeffs(), &set, &basis) else {
            return Err(TestCaseError::reject("start did not certify"));
        };
        for t in [0.0, 0.5, 1.0, 2.0, 10.0] {
            let x = &r + (&c - &r) * t;
            let worst = min_sdist_global(&x, &set, &basis).unwrap();
            prop_assert!(worst.value >= -1e-9, "t = {}: {}", t, worst.value);
        }
    }

    #[test]
    fn midpoints_of_feasible_points_are_feasible(
        dim in 3usize..=10,
        a in proptest::collection::vec(-1.0f64..1.0, 10),
        b in proptest::collection::vec(-1.0f64..1.0, 10),
    ) {
        let basis = sobolev_orthonormalize(0, dim).unwrap();
        let set = ConstraintSet::new(vec![
            ConstraintFamily::zero_bound(dim, 0, Sense::Lower),
            ConstraintFamily {
                bound_coeffs: constant_coeffs(&basis, 1.0).unwrap(),
                ..ConstraintFamily::zero_bound(dim, 0, Sense::Upper)
            },
            ConstraintFamily::zero_bound(dim, 1, Sense::Lower),
        ])
        .unwrap();
        let start = |v: &[f64]| DVector::from_column_slice(&v[..dim]);
        let (Some(p), Some(q)) = (
            feasible_point(&start(&a), &set, &basis),
            feasible_point(&start(&b), &set, &basis),
        ) else {
            return Err(TestCaseError::reject("start did not certify"));
        };
        let mid = (p + q) * 0.5;
        let worst = min_sdist_global(&mid, &set, &basis).unwrap();
        prop_assert!(worst.value >= -1e-9, "midpoint sdist {}", worst.value);
    }
}
