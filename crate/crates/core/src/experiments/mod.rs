//! Test functions, constraint presets, the η metric and the experiment
//! drivers behind the `conform experiment` subcommands.

mod report;
mod runs;

pub use report::{
    csv_paths, emit_report, Cell, ExperimentReport, OutputFormat, RunMetadata, RunSummary, Table,
};
pub use runs::*;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::basis::{inner_product, BasisElement, Difference, Function1D, OrthonormalBasis};
use crate::constraints::{
    constant_coeffs, identity_coeffs, ConstraintFamily, ConstraintSet, Sense,
};
use crate::{Error, Result};

/// f_j(x) = max(x, 0)^j, with f_0 the unit step (0 for x ≤ 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestFunction {
    pub j: usize,
}

impl TestFunction {
    pub fn new(j: usize) -> Self {
        Self { j }
    }
}

pub fn test_function(j: usize, x: f64, deriv: usize) -> Result<f64> {
    if deriv > j {
        return Err(Error::Unsupported(format!(
            "derivative {deriv} of f_{j} is not a function"
        )));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    // j! / (j - deriv)! x^(j - deriv)
    let falling: f64 = ((j - deriv + 1)..=j).map(|i| i as f64).product();
    Ok(falling * x.powi((j - deriv) as i32))
}

impl Function1D for TestFunction {
    fn eval(&self, x: f64, deriv: usize) -> Result<f64> {
        test_function(self.j, x, deriv)
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn piecewise_degree(&self) -> Option<usize> {
        Some(self.j)
    }
}

/// f(x) = |x|.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbsValue;

impl Function1D for AbsValue {
    fn eval(&self, x: f64, deriv: usize) -> Result<f64> {
        match deriv {
            0 => Ok(x.abs()),
            1 => Ok(if x < 0.0 { -1.0 } else { 1.0 }),
            _ => Err(Error::Unsupported(format!(
                "derivative {deriv} of |x| is not a function"
            ))),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn piecewise_degree(&self) -> Option<usize> {
        Some(1)
    }
}

/// Building blocks of the constraint presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetAtom {
    /// v ≥ 0
    F0,
    /// v ≤ 1
    G0,
    /// v' ≥ 0
    F1,
    /// v'' ≥ 0
    F2,
    /// v ≥ |x|
    J1,
    /// v ≥ -x on [-1, 0] and v ≤ x on [0, 1]
    J2,
}

impl PresetAtom {
    pub fn name(self) -> &'static str {
        match self {
            PresetAtom::F0 => "F0",
            PresetAtom::G0 => "G0",
            PresetAtom::F1 => "F1",
            PresetAtom::F2 => "F2",
            PresetAtom::J1 => "J1",
            PresetAtom::J2 => "J2",
        }
    }

    /// Whether the zero function satisfies the constraint. Both J sets
    /// require v ≥ |x| on [-1, 0].
    pub fn contains_zero(self) -> bool {
        !matches!(self, PresetAtom::J1 | PresetAtom::J2)
    }

    fn families(self, basis: &OrthonormalBasis) -> Result<Vec<ConstraintFamily>> {
        let n = basis.dim();
        Ok(match self {
            PresetAtom::F0 => vec![ConstraintFamily::zero_bound(n, 0, Sense::Lower)],
            PresetAtom::G0 => vec![ConstraintFamily {
                bound_coeffs: constant_coeffs(basis, 1.0)?,
                ..ConstraintFamily::zero_bound(n, 0, Sense::Upper)
            }],
            PresetAtom::F1 => vec![ConstraintFamily::zero_bound(n, 1, Sense::Lower)],
            PresetAtom::F2 => vec![ConstraintFamily::zero_bound(n, 2, Sense::Lower)],
            PresetAtom::J1 | PresetAtom::J2 => {
                let x = identity_coeffs(basis)?;
                let right = if self == PresetAtom::J1 {
                    Sense::Lower
                } else {
                    Sense::Upper
                };
                vec![
                    ConstraintFamily::new(0, Sense::Lower, -&x, vec![(-1.0, 0.0)])?,
                    ConstraintFamily::new(0, right, x, vec![(0.0, 1.0)])?,
                ]
            }
        })
    }
}

impl FromStr for PresetAtom {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F0" => Ok(PresetAtom::F0),
            "G0" => Ok(PresetAtom::G0),
            "F1" => Ok(PresetAtom::F1),
            "F2" => Ok(PresetAtom::F2),
            "J1" => Ok(PresetAtom::J1),
            "J2" => Ok(PresetAtom::J2),
            _ => Err(Error::InvalidArgument(format!("unknown preset `{s}`"))),
        }
    }
}

/// Intersection of preset atoms, written `F0+G0+F1` (or with `∩`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preset(pub Vec<PresetAtom>);

impl Preset {
    pub fn constraint_set(&self, basis: &OrthonormalBasis) -> Result<ConstraintSet> {
        let mut families = Vec::new();
        for atom in &self.0 {
            families.extend(atom.families(basis)?);
        }
        ConstraintSet::new(families)
    }

    pub fn contains_zero(&self) -> bool {
        self.0.iter().all(|a| a.contains_zero())
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.0.iter().map(|a| a.name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let atoms = s
            .split(['+', '∩'])
            .map(str::parse)
            .collect::<Result<Vec<PresetAtom>>>()?;
        Ok(Preset(atoms))
    }
}

/// η = ‖v - ṽ‖_H / ‖f - v‖_H and the total error factor √(1 + η²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eta {
    pub eta: f64,
    pub error_factor: f64,
}

/// η of a constrained approximant ṽ relative to the H-best projection v.
/// A vanishing best error gives η = ∞ (or 0 when ṽ = v as well).
pub fn eta(
    f: &dyn Function1D,
    v: &DVector<f64>,
    vtilde: &DVector<f64>,
    basis: &OrthonormalBasis,
) -> Result<Eta> {
    let space = basis.space();
    let diff = BasisElement::new(basis, &(v - vtilde));
    let num = inner_product(&diff, &diff, space)?.max(0.0).sqrt();
    let ve = BasisElement::new(basis, v);
    let resid = Difference { f, g: &ve };
    let den = inner_product(&resid, &resid, space)?.max(0.0).sqrt();
    let eta = if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(Eta {
        eta,
        error_factor: (1.0 + eta * eta).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::best_projection;
    use crate::basis::sobolev_orthonormalize;
    use ::approx::assert_abs_diff_eq;

    #[test]
    fn test_function_values() {
        assert_eq!(test_function(0, 0.5, 0).unwrap(), 1.0);
        assert_eq!(test_function(0, -0.5, 0).unwrap(), 0.0);
        assert_eq!(test_function(0, 0.0, 0).unwrap(), 0.0);
        assert_eq!(test_function(2, 0.5, 0).unwrap(), 0.25);
        assert_eq!(test_function(2, 0.5, 1).unwrap(), 1.0);
        assert_eq!(test_function(2, 0.5, 2).unwrap(), 2.0);
        assert_eq!(test_function(3, -0.2, 1).unwrap(), 0.0);
        for j in 0..6 {
            assert_eq!(test_function(j, 1.0, 0).unwrap(), 1.0);
        }
        assert!(test_function(1, 0.3, 2).is_err());
    }

    #[test]
    fn test_function_matches_iterated_integral() {
        // f_{j+1}(x) = (j+1) ∫_{-1}^x f_j
        let rule = crate::basis::gauss_quadrature(20).unwrap();
        for j in 0..4 {
            for x in [-0.5, 0.25, 0.8] {
                let integral: f64 = if x > 0.0 {
                    rule.integrate(0.0, x, |t| test_function(j, t, 0).unwrap())
                } else {
                    0.0
                };
                assert_abs_diff_eq!(
                    test_function(j + 1, x, 0).unwrap(),
                    (j + 1) as f64 * integral,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn preset_parsing() {
        let p: Preset = "F0+G0+F1".parse().unwrap();
        assert_eq!(p.0, vec![PresetAtom::F0, PresetAtom::G0, PresetAtom::F1]);
        assert_eq!(p.to_string(), "F0+G0+F1");
        let q: Preset = "F0∩F1∩F2".parse().unwrap();
        assert_eq!(q.0.len(), 3);
        assert!("F3".parse::<Preset>().is_err());
        assert!(p.contains_zero());
        assert!(!"J1".parse::<Preset>().unwrap().contains_zero());
        assert!(!"J2".parse::<Preset>().unwrap().contains_zero());
    }

    #[test]
    fn preset_families() {
        let b = sobolev_orthonormalize(0, 4).unwrap();
        let set = "J2".parse::<Preset>().unwrap().constraint_set(&b).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.families[1].sense, Sense::Upper);
        assert_eq!(set.families[1].domain, vec![(0.0, 1.0)]);
        let set = "F0+G0+F1+F2"
            .parse::<Preset>()
            .unwrap()
            .constraint_set(&b)
            .unwrap();
        let orders: Vec<_> = set.families.iter().map(|f| f.deriv_order).collect();
        assert_eq!(orders, vec![0, 0, 1, 2]);
    }

    #[test]
    fn eta_basics() {
        let b = sobolev_orthonormalize(0, 6).unwrap();
        let f = TestFunction::new(2);
        let v = best_projection(&f, &b).unwrap();
        assert_eq!(eta(&f, &v, &v, &b).unwrap().eta, 0.0);

        // Pythagoras: ‖f - ṽ‖² = (1 + η²) ‖f - v‖²
        let vt = &v + DVector::from_fn(6, |i, _| 0.01 * (i as f64 - 2.0));
        let e = eta(&f, &v, &vt, &b).unwrap();
        let space = b.space();
        let err = |c: &DVector<f64>| {
            let g = BasisElement::new(&b, c);
            let d = Difference { f: &f, g: &g };
            inner_product(&d, &d, space).unwrap()
        };
        assert_abs_diff_eq!(err(&vt), e.error_factor.powi(2) * err(&v), epsilon = 1e-9);
    }

    #[test]
    fn eta_of_exactly_represented_function() {
        let b = sobolev_orthonormalize(0, 4).unwrap();
        let f = TestFunction::new(0);
        let b1 = sobolev_orthonormalize(0, 1).unwrap();
        let v = best_projection(&f, &b1).unwrap();
        assert!(eta(&f, &v, &v, &b1).unwrap().eta == 0.0);
        let one = constant_coeffs(&b, 1.0).unwrap();
        let e = eta(&ConstOne, &one, &DVector::zeros(4), &b).unwrap();
        assert!(e.eta.is_infinite());
    }

    struct ConstOne;
    impl Function1D for ConstOne {
        fn eval(&self, _x: f64, deriv: usize) -> Result<f64> {
            Ok(if deriv == 0 { 1.0 } else { 0.0 })
        }
        fn piecewise_degree(&self) -> Option<usize> {
            Some(0)
        }
    }
}
