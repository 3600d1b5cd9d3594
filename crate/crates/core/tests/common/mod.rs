//! Helpers shared by the integration tests.
#![allow(dead_code)]

use conform::basis;
use conform::rootfind::PolyInBasis;

/// Double-double value `hi + lo`, enough to build test polynomials whose
/// coefficients are correct to the last bit.
#[derive(Clone, Copy, Default)]
struct Dd(f64, f64);
fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}
impl Dd {
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let e = s.1 + self.1 + o.1;
        two_sum(s.0, e)
    }
    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p) + self.0 * o.1 + self.1 * o.0;
        two_sum(p, e)
    }
    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }
    fn sqrt(self) -> Dd {
        let s = self.0.sqrt();
        let r = self.add(Dd(s, 0.0).mul(Dd(s, 0.0)).neg());
        two_sum(s, r.0 / (2.0 * s))
    }
    fn recip(self) -> Dd {
        let q = 1.0 / self.0;
        let r = Dd(1.0, 0.0).add(self.mul(Dd(q, 0.0)).neg());
        two_sum(q, r.0 * q)
    }
}
pub fn poly_from_roots(roots: &[f64]) -> PolyInBasis {
    let deg = roots.len();
    let b = |k: usize| -> Dd {
        let k = k as f64;
        let den = Dd(4.0 * k * k - 1.0, 0.0).sqrt();
        Dd(k, 0.0).mul(den.recip())
    };
    let mut c = vec![Dd::default(); deg + 1];
    c[0] = Dd(2.0, 0.0).sqrt();
    for (n, &r) in roots.iter().enumerate() {
        let mut next = vec![Dd::default(); deg + 1];
        for k in 0..=n {
            next[k + 1] = next[k + 1].add(c[k].mul(b(k + 1)));
            if k > 0 {
                next[k - 1] = next[k - 1].add(c[k].mul(b(k)));
            }
            next[k] = next[k].add(c[k].mul(Dd(-r, 0.0)));
        }
        c = next;
    }
    PolyInBasis::new(c.into_iter().map(|v| v.0 + v.1).collect())
}
pub fn root_condition(p: &PolyInBasis, roots: &[f64], i: usize) -> f64 {
    let r = roots[i];
    let vals = basis::legendre_values(r, p.coeffs.len());
    let noise: f64 = p
        .coeffs
        .iter()
        .zip(&vals)
        .map(|(c, v)| (c * v).abs())
        .sum::<f64>()
        * f64::EPSILON;
    let d: f64 = roots
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, s)| r - s)
        .product();
    noise / d.abs()
}
