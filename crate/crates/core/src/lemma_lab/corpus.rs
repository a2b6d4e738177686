//! Random exact-rational polynomial corpora.

use num_bigint::BigInt;
use rand::Rng;

use crate::poly::{Monomial, Polynomial, Rational, VarId};

/// Numerators range over `[-100, 100] \ {0}`, denominators over `[1, 16]`.
pub fn random_rational<R: Rng + ?Sized>(rng: &mut R) -> Rational {
    let mut p = 0;
    while p == 0 {
        p = rng.random_range(-100i64..=100);
    }
    let q = rng.random_range(1i64..=16);
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Every monomial of total degree at most `d` over `vars`, in graded order.
pub fn monomials_up_to(vars: &[VarId], d: u32) -> Vec<Monomial> {
    let mut out = vec![Monomial::one()];
    let mut frontier: Vec<(Monomial, usize)> = vec![(Monomial::one(), 0)];
    for _ in 0..d {
        let mut next = Vec::new();
        for (m, start) in &frontier {
            for (idx, &v) in vars.iter().enumerate().skip(*start) {
                next.push((m.mul(&Monomial::var(v)), idx));
            }
        }
        out.extend(next.iter().map(|(m, _)| m.clone()));
        frontier = next;
    }
    out
}

/// Each monomial of degree `≤ d` kept with probability `density`, with a
/// random rational coefficient.
pub fn random_rational_poly<R: Rng + ?Sized>(vars: &[VarId], d: u32, density: f64, rng: &mut R) -> Polynomial<Rational> {
    let mut terms = Vec::new();
    for m in monomials_up_to(vars, d) {
        if rng.random_bool(density) {
            terms.push((m, random_rational(rng)));
        }
    }
    Polynomial::from_terms(terms)
}

/// `W_{0j}` for `j < t`, the variables of the single-block-mean lemmas.
pub fn w_vars(t: u32) -> Vec<VarId> {
    (0..t).map(|j| VarId::w(0, j)).collect()
}

/// The variables `x0, y0, z0`.
pub fn xyz() -> (VarId, VarId, VarId) {
    (VarId::abstract_var('x', 0), VarId::abstract_var('y', 0), VarId::abstract_var('z', 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::RngSeed;

    #[test]
    fn monomial_counts() {
        let v = w_vars(3);
        assert_eq!(monomials_up_to(&v, 0).len(), 1);
        assert_eq!(monomials_up_to(&v, 2).len(), 10);
        assert_eq!(monomials_up_to(&w_vars(20), 2).len(), 231);
    }

    #[test]
    fn coefficients_in_range() {
        let mut rng = RngSeed::new(1).rng();
        for _ in 0..200 {
            let c = random_rational(&mut rng);
            assert!(*c.denom() <= BigInt::from(16));
            assert!(c.numer().magnitude() <= &100u32.into());
            assert!(c != Rational::from_integer(0.into()));
        }
        let p = random_rational_poly(&w_vars(3), 2, 0.5, &mut rng);
        assert!(p.degree() <= 2);
    }
}
