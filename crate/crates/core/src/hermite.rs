//! Product-Hermite bases over designated standard-Gaussian variables.
//!
//! Expansions are stored against the monic probabilists' polynomials `He_n`
//! so that rational inputs stay exact. The orthonormal polynomial is
//! `H_n = He_n / √(n!)`, so a stored coefficient `c` of `He_𝐝` corresponds to
//! the orthonormal coefficient `c·√(Π dᵢ!)` and contributes `c²·Π dᵢ!` to the
//! squared L2 norm.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use crate::poly::{Coeff, Monomial, Polynomial, VarId};

/// Default cap on univariate Hermite degrees.
pub const DEFAULT_HERMITE_CAP: u32 = 8;

/// Largest per-variable degree the conversion tables cover.
pub const MAX_TABLE_DEGREE: u32 = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HermiteError {
    #[error("Hermite degree {degree} exceeds cap {cap}")]
    DegreeCap { degree: u32, cap: u32 },
    #[error("coefficient of {index} is not constant")]
    NonConstantCoefficient { index: String },
    #[error("variable {0} is not allowed in a coefficient polynomial")]
    ForeignVariable(VarId),
    #[error("expansion is inconsistent with block {0}")]
    BlockMismatch(u32),
}

/// Multi-index of a product-Hermite basis element: variable ↦ degree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HermiteIndex(Monomial);

impl HermiteIndex {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (VarId, u32)>>(pairs: I) -> Self {
        HermiteIndex(Monomial::from_pairs(pairs))
    }

    pub fn degree(&self) -> u32 {
        self.0.degree()
    }

    pub fn entries(&self) -> &[(VarId, u32)] {
        self.0.vars()
    }

    pub fn get(&self, v: VarId) -> u32 {
        self.0.exponent(v)
    }

    /// `Π dᵢ!`, the squared norm of the monic basis element.
    pub fn weight(&self) -> u64 {
        self.entries().iter().map(|&(_, d)| factorial(d)).product()
    }

    pub fn combine(&self, other: &HermiteIndex) -> HermiteIndex {
        HermiteIndex(self.0.mul(&other.0))
    }
}

impl std::fmt::Display for HermiteIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.entries().is_empty() {
            return write!(f, "H()");
        }
        write!(f, "H(")?;
        for (n, (v, d)) in self.entries().iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}:{d}")?;
        }
        write!(f, ")")
    }
}

pub fn factorial(n: u32) -> u64 {
    (1..=n as u64).product()
}

struct Tables {
    /// `x^n = Σ to_he[n][..] He_m`, entries `(m, coeff)`.
    to_he: Vec<Vec<(u32, i64)>>,
    /// `He_n = Σ from_he[n][..] x^m`, entries `(m, coeff)`.
    from_he: Vec<Vec<(u32, i64)>>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut to_he = Vec::new();
        let mut from_he = Vec::new();
        for n in 0..=MAX_TABLE_DEGREE {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for m in 0..=n / 2 {
                // n! / (2^m m! (n-2m)!)
                let c = pairing_count(n, m);
                a.push((n - 2 * m, c));
                b.push((n - 2 * m, if m % 2 == 0 { c } else { -c }));
            }
            a.reverse();
            b.reverse();
            to_he.push(a);
            from_he.push(b);
        }
        Tables { to_he, from_he }
    })
}

/// Number of ways to choose `m` disjoint pairs among `n` items.
fn pairing_count(n: u32, m: u32) -> i64 {
    let mut c: i128 = 1;
    let mut remaining = n as i128;
    for _ in 0..m {
        c *= remaining * (remaining - 1) / 2;
        remaining -= 2;
    }
    let mfact: i128 = (1..=m as i128).product();
    (c / mfact) as i64
}

fn check_table(n: u32) -> Result<(), HermiteError> {
    if n > MAX_TABLE_DEGREE {
        Err(HermiteError::DegreeCap { degree: n, cap: MAX_TABLE_DEGREE })
    } else {
        Ok(())
    }
}

/// Monic `He_n(v)` with exact coefficients.
pub fn hermite_monic<C: Coeff>(v: VarId, n: u32) -> Result<Polynomial<C>, HermiteError> {
    check_table(n)?;
    Ok(Polynomial::from_terms(
        tables().from_he[n as usize].iter().map(|&(m, c)| (Monomial::var_pow(v, m), C::from_i64(c))),
    ))
}

/// Orthonormal probabilists' Hermite polynomial `H_deg` in the variable `x0`,
/// subject to [`DEFAULT_HERMITE_CAP`].
pub fn hermite_univariate(deg: u32) -> Result<Polynomial, HermiteError> {
    hermite_univariate_capped(deg, DEFAULT_HERMITE_CAP, VarId::abstract_var('x', 0))
}

pub fn hermite_univariate_capped(deg: u32, cap: u32, v: VarId) -> Result<Polynomial, HermiteError> {
    if deg > cap {
        return Err(HermiteError::DegreeCap { degree: deg, cap });
    }
    let he: Polynomial = hermite_monic(v, deg)?;
    Ok(he.scale(&(1.0 / (factorial(deg) as f64).sqrt())))
}

/// A polynomial written as `Σ_𝐝 He_𝐝(gaussian vars) · coeff_𝐝(other vars)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteExpansion<C: Coeff = f64> {
    gaussian: BTreeSet<VarId>,
    coeffs: BTreeMap<HermiteIndex, Polynomial<C>>,
}

impl<C: Coeff> HermiteExpansion<C> {
    pub fn new(gaussian: BTreeSet<VarId>) -> Self {
        HermiteExpansion { gaussian, coeffs: BTreeMap::new() }
    }

    pub fn gaussian_vars(&self) -> &BTreeSet<VarId> {
        &self.gaussian
    }

    /// Coefficients against the monic basis `He_𝐝`.
    pub fn coeffs(&self) -> &BTreeMap<HermiteIndex, Polynomial<C>> {
        &self.coeffs
    }

    pub fn coeff(&self, idx: &HermiteIndex) -> Polynomial<C> {
        self.coeffs.get(idx).cloned().unwrap_or_default()
    }

    /// Adds `p · He_idx`; `p` must be free of the Gaussian variables.
    pub fn add_term(&mut self, idx: HermiteIndex, p: &Polynomial<C>) {
        debug_assert!(idx.entries().iter().all(|(v, _)| self.gaussian.contains(v)));
        debug_assert!(p.is_free_of(|v| self.gaussian.contains(&v)));
        let entry = self.coeffs.entry(idx.clone()).or_default();
        *entry = &*entry + p;
        if entry.is_zero() {
            self.coeffs.remove(&idx);
        }
    }

    /// Coefficient of `idx` against the orthonormal basis `H_𝐝`, as floats.
    pub fn normalized_coeff(&self, idx: &HermiteIndex) -> Polynomial {
        self.coeff(idx).to_f64().scale(&(idx.weight() as f64).sqrt())
    }

    /// Orthonormal-basis view: index ↦ float coefficient polynomial.
    pub fn normalized(&self) -> BTreeMap<HermiteIndex, Polynomial> {
        self.coeffs.keys().map(|k| (k.clone(), self.normalized_coeff(k))).collect()
    }

    fn constant_coeffs(&self) -> Result<impl Iterator<Item = (&HermiteIndex, C)>, HermiteError> {
        for (k, p) in &self.coeffs {
            if !p.is_constant() {
                return Err(HermiteError::NonConstantCoefficient { index: k.to_string() });
            }
        }
        Ok(self.coeffs.iter().map(|(k, p)| (k, p.constant_term())))
    }

    /// `E[p²]` in the coefficient field; valid when all coefficients are constants.
    pub fn l2_norm_sq_exact(&self) -> Result<C, HermiteError> {
        Ok(self
            .constant_coeffs()?
            .fold(C::zero(), |acc, (k, c)| acc + c.clone() * c * C::from_i64(k.weight() as i64)))
    }

    /// `√E[p²]` under i.i.d. standard Gaussians.
    pub fn l2_norm(&self) -> Result<f64, HermiteError> {
        Ok(self
            .constant_coeffs()?
            .map(|(k, c)| c.to_f64().powi(2) * k.weight() as f64)
            .sum::<f64>()
            .sqrt())
    }

    /// `Σ_H ‖L_H‖²_mon,2` with orthonormal `H`, exact in the coefficient field.
    pub fn basis_b_norm_sq_exact(&self) -> Result<C, HermiteError> {
        self.check_coefficient_vars(|v| matches!(v, VarId::W { .. }))?;
        Ok(self.coeffs.iter().fold(C::zero(), |acc, (k, p)| {
            acc + p.mon_norm_sq() * C::from_i64(k.weight() as i64)
        }))
    }

    /// `‖L‖_B = √(Σ_H ‖L_H(W)‖²_mon,2)`; coefficients may only involve W-variables.
    pub fn basis_b_norm(&self) -> Result<f64, HermiteError> {
        Ok(self.basis_b_norm_sq_exact()?.to_f64().sqrt())
    }

    /// `√(Σ_{deg H = d*} Σ_{i∈J} ‖M_{H,{(i,j*)}}‖²_mon,2)`, where `M_{H,S}` is the
    /// coefficient of `Y_S` inside the coefficient of `H`. Hermite variables
    /// must be Z-variables outside block `j*`; coefficient polynomials may use
    /// block-`j*` Y-variables and W-variables of other blocks.
    pub fn basis_b_partial_norm(&self, jstar: u32, dstar: u32, labels: &BTreeSet<u32>) -> Result<f64, HermiteError> {
        for v in &self.gaussian {
            match *v {
                VarId::Z { block, .. } if block != jstar => {}
                VarId::Z { .. } => return Err(HermiteError::BlockMismatch(jstar)),
                other => return Err(HermiteError::ForeignVariable(other)),
            }
        }
        self.check_coefficient_vars(|v| match v {
            VarId::Block { block, .. } => block == jstar,
            VarId::W { block, .. } => block != jstar,
            _ => false,
        })?;
        let mut total = 0.0;
        for (k, p) in self.coeffs.iter().filter(|(k, _)| k.degree() == dstar) {
            let w = k.weight() as f64;
            for (m, c) in p.terms() {
                let (ys, _) = m.partition_vars(|v| matches!(v, VarId::Block { .. }));
                if let [(VarId::Block { index, .. }, 1)] = ys.vars() {
                    if labels.contains(index) {
                        total += w * c.to_f64().powi(2);
                    }
                }
            }
        }
        Ok(total.sqrt())
    }

    fn check_coefficient_vars(&self, allowed: impl Fn(VarId) -> bool) -> Result<(), HermiteError> {
        for p in self.coeffs.values() {
            if let Some(v) = p.variables().into_iter().find(|&v| !allowed(v)) {
                return Err(HermiteError::ForeignVariable(v));
            }
        }
        Ok(())
    }
}

/// Rewrites `p` in the product-Hermite basis of `gaussian`; other variables
/// stay inside the coefficient polynomials.
pub fn to_hermite<C: Coeff>(p: &Polynomial<C>, gaussian: &BTreeSet<VarId>) -> Result<HermiteExpansion<C>, HermiteError> {
    let t = tables();
    let mut acc: BTreeMap<HermiteIndex, Vec<(Monomial, C)>> = BTreeMap::new();
    for (m, c) in p.terms() {
        let (g, rest) = m.partition_vars(|v| gaussian.contains(&v));
        let mut combos: Vec<(Vec<(VarId, u32)>, i64)> = vec![(Vec::new(), 1)];
        for &(v, n) in g.vars() {
            check_table(n)?;
            let mut next = Vec::with_capacity(combos.len() * (n as usize / 2 + 1));
            for (idx, k) in &combos {
                for &(deg, c) in &t.to_he[n as usize] {
                    let mut idx = idx.clone();
                    idx.push((v, deg));
                    next.push((idx, k * c));
                }
            }
            combos = next;
        }
        for (idx, k) in combos {
            acc.entry(HermiteIndex::from_pairs(idx))
                .or_default()
                .push((rest.clone(), c.clone() * C::from_i64(k)));
        }
    }
    let coeffs = acc
        .into_iter()
        .map(|(k, terms)| (k, Polynomial::from_terms(terms)))
        .filter(|(_, p)| !p.is_zero())
        .collect();
    Ok(HermiteExpansion { gaussian: gaussian.clone(), coeffs })
}

/// Inverse of [`to_hermite`].
pub fn from_hermite<C: Coeff>(e: &HermiteExpansion<C>) -> Result<Polynomial<C>, HermiteError> {
    let mut parts = Vec::with_capacity(e.coeffs.len());
    for (idx, coeff) in &e.coeffs {
        let mut basis = Polynomial::one();
        for &(v, d) in idx.entries() {
            basis = &basis * &hermite_monic(v, d)?;
        }
        parts.push(&basis * coeff);
    }
    Ok(parts.into_iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Rational;

    fn x() -> VarId {
        VarId::abstract_var('x', 0)
    }

    #[test]
    fn listed_low_degree_forms() {
        let xp = Polynomial::var(x());
        assert_eq!(hermite_univariate(0).unwrap(), Polynomial::one());
        assert_eq!(hermite_univariate(1).unwrap(), xp);
        let h2 = (xp.pow(2) - Polynomial::one()).scale(&(1.0 / 2f64.sqrt()));
        assert!(hermite_univariate(2).unwrap().approx_eq(&h2, 1e-15));
        let h3 = (xp.pow(3) - xp.scale(&3.0)).scale(&(1.0 / 6f64.sqrt()));
        assert!(hermite_univariate(3).unwrap().approx_eq(&h3, 1e-15));
        assert!(matches!(hermite_univariate(9), Err(HermiteError::DegreeCap { .. })));
    }

    #[test]
    fn table_entries() {
        let he4: Polynomial<Rational> = hermite_monic(x(), 4).unwrap();
        let xp = Polynomial::<Rational>::var(x());
        let expect = xp.pow(4) - xp.pow(2).scale(&Rational::from_i64(6)) + Polynomial::constant(Rational::from_i64(3));
        assert_eq!(he4, expect);
        assert_eq!(pairing_count(20, 10), 654_729_075);
    }

    #[test]
    fn x_squared_expansion() {
        let g: BTreeSet<_> = [x()].into();
        let e = to_hermite(&Polynomial::<f64>::var(x()).pow(2), &g).unwrap();
        let h2 = HermiteIndex::from_pairs([(x(), 2)]);
        assert!((e.normalized_coeff(&h2).constant_term() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(e.normalized_coeff(&HermiteIndex::zero()).constant_term(), 1.0);
        assert!((e.l2_norm().unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(from_hermite(&e).unwrap(), Polynomial::var(x()).pow(2));
    }

    #[test]
    fn formal_variables_stay_in_coefficients() {
        let w = VarId::w(0, 0);
        let g: BTreeSet<_> = [x()].into();
        let e = to_hermite(&(Polynomial::<f64>::var(w) * Polynomial::var(x())), &g).unwrap();
        assert_eq!(e.coeffs().len(), 1);
        assert_eq!(e.coeff(&HermiteIndex::from_pairs([(x(), 1)])), Polynomial::var(w));
        assert!(e.l2_norm().is_err());
        let c = to_hermite(&Polynomial::constant(5.0), &g).unwrap();
        assert_eq!(c.coeff(&HermiteIndex::zero()), Polynomial::constant(5.0));
        assert_eq!(to_hermite(&Polynomial::<f64>::zero(), &g).unwrap().l2_norm().unwrap(), 0.0);
    }

    #[test]
    fn basis_b_norms() {
        let z = VarId::z(0, 1);
        let z2 = VarId::z(1, 1);
        let g: BTreeSet<_> = [z, z2].into();
        let w1 = VarId::w(0, 0);
        let w2 = VarId::w(0, 2);
        let mut e = HermiteExpansion::<f64>::new(g.clone());
        e.add_term(HermiteIndex::from_pairs([(z, 1)]), &Polynomial::var(w1).scale(&2.0));
        assert_eq!(e.basis_b_norm().unwrap(), 2.0);

        let h2: Polynomial = hermite_univariate_capped(2, 8, z).unwrap();
        let p = Polynomial::var(z) * Polynomial::var(w1) + h2 * Polynomial::var(w2);
        let e = to_hermite(&p, &g).unwrap();
        assert!((e.basis_b_norm().unwrap() - 2f64.sqrt()).abs() < 1e-12);

        let bad = to_hermite(&(Polynomial::<f64>::var(z) * Polynomial::var(VarId::u(1))), &g).unwrap();
        assert_eq!(bad.basis_b_norm(), Err(HermiteError::ForeignVariable(VarId::u(1))));
    }

    #[test]
    fn partial_norm_on_single_linear_entry() {
        let jstar = 0;
        let z = VarId::z(0, 1);
        let y = VarId::block(0, jstar);
        let w = VarId::w(0, 1);
        let g: BTreeSet<_> = [z].into();
        let p = Polynomial::var(z) * Polynomial::var(y) * Polynomial::var(w).scale(&-3.0);
        let e = to_hermite(&p, &g).unwrap();
        assert_eq!(e.basis_b_partial_norm(jstar, 1, &[0].into()).unwrap(), 3.0);
        assert_eq!(e.basis_b_partial_norm(jstar, 1, &[1].into()).unwrap(), 0.0);
        assert_eq!(e.basis_b_partial_norm(jstar, 0, &[0].into()).unwrap(), 0.0);
        assert!(e.basis_b_partial_norm(1, 1, &[0].into()).is_err());
    }
}
