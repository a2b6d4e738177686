//! Sparse multivariate polynomials over structured variable ids.

mod coeff;
mod text;
mod var;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::{Add, Mul, Neg, Sub};

use smallvec::SmallVec;

pub use coeff::{rational_pow, set_zero_epsilon, zero_epsilon, Coeff, Rational, DEFAULT_ZERO_EPS};
pub use text::ParsePolyError;
pub use var::{ParseVarError, VarId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("product degree {degree} exceeds the configured cap {cap}")]
    DegreeCap { degree: u32, cap: u32 },
    #[error("no value bound for variable {0}")]
    MissingBinding(VarId),
}

/// Product of variable powers. Exponents are positive and variables sorted.
///
/// The derived ordering compares total degree first, then the sorted
/// variable list, which is the graded-lex order used for serialization.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial {
    degree: u32,
    vars: SmallVec<[(VarId, u32); 4]>,
}

impl Monomial {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn var(v: VarId) -> Self {
        Self::var_pow(v, 1)
    }

    pub fn var_pow(v: VarId, exp: u32) -> Self {
        if exp == 0 {
            return Self::one();
        }
        let mut vars = SmallVec::new();
        vars.push((v, exp));
        Monomial { degree: exp, vars }
    }

    /// Builds a monomial from (variable, exponent) pairs, merging repeats and
    /// dropping zero exponents.
    pub fn from_pairs<I: IntoIterator<Item = (VarId, u32)>>(pairs: I) -> Self {
        let mut map: BTreeMap<VarId, u32> = BTreeMap::new();
        for (v, e) in pairs {
            *map.entry(v).or_insert(0) += e;
        }
        let vars: SmallVec<_> = map.into_iter().filter(|&(_, e)| e > 0).collect();
        let degree = vars.iter().map(|&(_, e)| e).sum();
        Monomial { degree, vars }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn is_one(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars(&self) -> &[(VarId, u32)] {
        &self.vars
    }

    pub fn exponent(&self, v: VarId) -> u32 {
        match self.vars.binary_search_by(|(w, _)| w.cmp(&v)) {
            Ok(pos) => self.vars[pos].1,
            Err(_) => 0,
        }
    }

    /// Splits off `v`, returning its exponent and the cofactor.
    pub fn split_var(&self, v: VarId) -> (u32, Monomial) {
        match self.vars.binary_search_by(|(w, _)| w.cmp(&v)) {
            Ok(pos) => {
                let e = self.vars[pos].1;
                let mut vars = self.vars.clone();
                vars.remove(pos);
                (e, Monomial { degree: self.degree - e, vars })
            }
            Err(_) => (0, self.clone()),
        }
    }

    /// Restricts to the variables satisfying `keep`; returns (kept, rest).
    pub fn partition_vars(&self, mut keep: impl FnMut(VarId) -> bool) -> (Monomial, Monomial) {
        let mut a = SmallVec::new();
        let mut b = SmallVec::new();
        let (mut da, mut db) = (0, 0);
        for &(v, e) in &self.vars {
            if keep(v) {
                a.push((v, e));
                da += e;
            } else {
                b.push((v, e));
                db += e;
            }
        }
        (Monomial { degree: da, vars: a }, Monomial { degree: db, vars: b })
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        if self.is_one() {
            return other.clone();
        }
        if other.is_one() {
            return self.clone();
        }
        let mut vars: SmallVec<[(VarId, u32); 4]> =
            SmallVec::with_capacity(self.vars.len() + other.vars.len());
        let (mut i, mut j) = (0, 0);
        while i < self.vars.len() && j < other.vars.len() {
            let (a, ea) = self.vars[i];
            let (b, eb) = other.vars[j];
            match a.cmp(&b) {
                std::cmp::Ordering::Less => {
                    vars.push((a, ea));
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    vars.push((b, eb));
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    vars.push((a, ea + eb));
                    i += 1;
                    j += 1;
                }
            }
        }
        vars.extend_from_slice(&self.vars[i..]);
        vars.extend_from_slice(&other.vars[j..]);
        Monomial { degree: self.degree + other.degree, vars }
    }

    pub fn evaluate_with(&self, mut value: impl FnMut(VarId) -> Option<f64>) -> Result<f64, PolyError> {
        let mut acc = 1.0;
        for &(v, e) in &self.vars {
            let x = value(v).ok_or(PolyError::MissingBinding(v))?;
            acc *= x.powi(e as i32);
        }
        Ok(acc)
    }
}

impl std::fmt::Display for Monomial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.vars.is_empty() {
            return write!(f, "1");
        }
        for (n, (v, e)) in self.vars.iter().enumerate() {
            if n > 0 {
                write!(f, " ")?;
            }
            write!(f, "{v}^{e}")?;
        }
        Ok(())
    }
}

/// Sparse polynomial: a map from monomials to nonzero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<C: Coeff = f64> {
    terms: BTreeMap<Monomial, C>,
}

impl<C: Coeff> Default for Polynomial<C> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<C: Coeff> Polynomial<C> {
    pub fn zero() -> Self {
        Polynomial { terms: BTreeMap::new() }
    }

    pub fn constant(c: C) -> Self {
        Self::term(Monomial::one(), c)
    }

    pub fn one() -> Self {
        Self::constant(C::one())
    }

    pub fn var(v: VarId) -> Self {
        Self::term(Monomial::var(v), C::one())
    }

    pub fn term(m: Monomial, c: C) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_negligible() {
            terms.insert(m, c);
        }
        Polynomial { terms }
    }

    /// Sums the given terms, merging equal monomials.
    pub fn from_terms<I: IntoIterator<Item = (Monomial, C)>>(terms: I) -> Self {
        let mut out = BTreeMap::new();
        for (m, c) in terms {
            accumulate(&mut out, m, c);
        }
        prune(&mut out);
        Polynomial { terms: out }
    }

    /// `Σ c_v · v`.
    pub fn linear<I: IntoIterator<Item = (VarId, C)>>(terms: I) -> Self {
        Self::from_terms(terms.into_iter().map(|(v, c)| (Monomial::var(v), c)))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &C)> {
        self.terms.iter()
    }

    pub fn into_terms(self) -> impl Iterator<Item = (Monomial, C)> {
        self.terms.into_iter()
    }

    pub fn coeff(&self, m: &Monomial) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero)
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, v: VarId) -> u32 {
        self.terms.keys().map(|m| m.exponent(v)).max().unwrap_or(0)
    }

    pub fn variables(&self) -> BTreeSet<VarId> {
        self.terms.keys().flat_map(|m| m.vars().iter().map(|&(v, _)| v)).collect()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(Monomial::is_one)
    }

    pub fn constant_term(&self) -> C {
        self.coeff(&Monomial::one())
    }

    /// True when no variable of `self` satisfies `pred`.
    pub fn is_free_of(&self, mut pred: impl FnMut(VarId) -> bool) -> bool {
        self.terms.keys().all(|m| m.vars().iter().all(|&(v, _)| !pred(v)))
    }

    pub fn scale(&self, c: &C) -> Self {
        Self::from_terms(self.terms.iter().map(|(m, x)| (m.clone(), x.clone() * c.clone())))
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Polynomial<D> {
        Polynomial::from_terms(self.terms.iter().map(|(m, c)| (m.clone(), f(c))))
    }

    pub fn to_f64(&self) -> Polynomial<f64> {
        self.map_coeffs(|c| c.to_f64())
    }

    /// Keeps only the terms whose monomial satisfies `keep`.
    pub fn filter_terms(&self, mut keep: impl FnMut(&Monomial) -> bool) -> Self {
        Polynomial {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| keep(m))
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    /// Multiplies by a monomial.
    pub fn mul_monomial(&self, m: &Monomial, c: &C) -> Self {
        Self::from_terms(self.terms.iter().map(|(k, x)| (k.mul(m), x.clone() * c.clone())))
    }

    /// Product with a degree cap: fails if the product would exceed `cap`.
    pub fn checked_mul(&self, other: &Self, cap: u32) -> Result<Self, PolyError> {
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero());
        }
        let degree = self.degree() + other.degree();
        if degree > cap {
            return Err(PolyError::DegreeCap { degree, cap });
        }
        Ok(self * other)
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Replaces each bound variable by its polynomial; unbound variables pass through.
    pub fn substitute(&self, bindings: &HashMap<VarId, Polynomial<C>>) -> Self {
        let mut powers: HashMap<(VarId, u32), Polynomial<C>> = HashMap::new();
        let mut out = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut kept: SmallVec<[(VarId, u32); 4]> = SmallVec::new();
            let mut factor = Polynomial::constant(c.clone());
            for &(v, e) in m.vars() {
                match bindings.get(&v) {
                    Some(b) => {
                        let p = powers.entry((v, e)).or_insert_with(|| b.pow(e));
                        factor = &factor * &*p;
                    }
                    None => kept.push((v, e)),
                }
            }
            let rest = Monomial::from_pairs(kept);
            for (k, x) in factor.terms {
                accumulate(&mut out, k.mul(&rest), x);
            }
        }
        prune(&mut out);
        Polynomial { terms: out }
    }

    pub fn evaluate_with(&self, mut value: impl FnMut(VarId) -> Option<f64>) -> Result<f64, PolyError> {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            acc += c.to_f64() * m.evaluate_with(&mut value)?;
        }
        Ok(acc)
    }

    pub fn evaluate(&self, point: &HashMap<VarId, f64>) -> Result<f64, PolyError> {
        self.evaluate_with(|v| point.get(&v).copied())
    }

    /// Sum of squared coefficients, i.e. `mon_norm(p, 2)²`, in the coefficient field.
    pub fn mon_norm_sq(&self) -> C {
        self.terms.values().fold(C::zero(), |acc, c| acc + c.clone() * c.clone())
    }

    /// Sum of absolute coefficients, i.e. `mon_norm(p, 1)`, in the coefficient field.
    pub fn mon_norm1_exact(&self) -> C {
        self.terms.values().fold(C::zero(), |acc, c| acc + c.abs())
    }

    /// ℓ₁ (`order == 1`) or ℓ₂ (`order == 2`) norm of the coefficient vector.
    pub fn mon_norm(&self, order: u8) -> f64 {
        match order {
            1 => self.terms.values().map(|c| c.to_f64().abs()).sum(),
            2 => self.terms.values().map(|c| c.to_f64().powi(2)).sum::<f64>().sqrt(),
            _ => panic!("mon_norm order must be 1 or 2, got {order}"),
        }
    }

    /// Writes `p = Σ_ℓ v^ℓ · part[ℓ]` with each part free of `v`.
    pub fn partition_by_degree_in(&self, v: VarId) -> BTreeMap<u32, Polynomial<C>> {
        let mut parts: BTreeMap<u32, BTreeMap<Monomial, C>> = BTreeMap::new();
        for (m, c) in &self.terms {
            let (e, rest) = m.split_var(v);
            parts.entry(e).or_default().insert(rest, c.clone());
        }
        if parts.is_empty() {
            parts.insert(0, BTreeMap::new());
        }
        parts.into_iter().map(|(e, terms)| (e, Polynomial { terms })).collect()
    }

    /// Writes `p = v²·divisible + remainder` where no remainder term has `v²`.
    pub fn split_quadratic(&self, v: VarId) -> (Polynomial<C>, Polynomial<C>) {
        let mut div = BTreeMap::new();
        let mut rem = BTreeMap::new();
        for (m, c) in &self.terms {
            let (e, rest) = m.split_var(v);
            if e >= 2 {
                div.insert(rest.mul(&Monomial::var_pow(v, e - 2)), c.clone());
            } else {
                rem.insert(m.clone(), c.clone());
            }
        }
        (Polynomial { terms: div }, Polynomial { terms: rem })
    }

    /// True when every coefficient differs from `other`'s by at most `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self - other).terms.values().all(|c| c.to_f64().abs() <= tol)
    }

    /// Largest coefficient magnitude.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.to_f64().abs()).fold(0.0, f64::max)
    }
}

fn accumulate<C: Coeff>(map: &mut BTreeMap<Monomial, C>, m: Monomial, c: C) {
    match map.get_mut(&m) {
        Some(x) => *x = x.clone() + c,
        None => {
            map.insert(m, c);
        }
    }
}

fn prune<C: Coeff>(map: &mut BTreeMap<Monomial, C>) {
    map.retain(|_, c| !c.is_negligible());
}

impl<C: Coeff> Add for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn add(self, rhs: Self) -> Polynomial<C> {
        let mut terms = self.terms.clone();
        for (m, c) in &rhs.terms {
            accumulate(&mut terms, m.clone(), c.clone());
        }
        prune(&mut terms);
        Polynomial { terms }
    }
}

impl<C: Coeff> Sub for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn sub(self, rhs: Self) -> Polynomial<C> {
        let mut terms = self.terms.clone();
        for (m, c) in &rhs.terms {
            accumulate(&mut terms, m.clone(), -c.clone());
        }
        prune(&mut terms);
        Polynomial { terms }
    }
}

impl<C: Coeff> Mul for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn mul(self, rhs: Self) -> Polynomial<C> {
        let mut terms = BTreeMap::new();
        for (a, x) in &self.terms {
            for (b, y) in &rhs.terms {
                accumulate(&mut terms, a.mul(b), x.clone() * y.clone());
            }
        }
        prune(&mut terms);
        Polynomial { terms }
    }
}

impl<C: Coeff> Neg for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn neg(self) -> Polynomial<C> {
        Polynomial { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect() }
    }
}

macro_rules! owned_ops {
    ($($tr:ident $f:ident),*) => {$(
        impl<C: Coeff> $tr for Polynomial<C> {
            type Output = Polynomial<C>;
            fn $f(self, rhs: Self) -> Polynomial<C> {
                (&self).$f(&rhs)
            }
        }
        impl<C: Coeff> $tr<&Polynomial<C>> for Polynomial<C> {
            type Output = Polynomial<C>;
            fn $f(self, rhs: &Polynomial<C>) -> Polynomial<C> {
                (&self).$f(rhs)
            }
        }
    )*};
}
owned_ops!(Add add, Sub sub, Mul mul);

impl<C: Coeff> Neg for Polynomial<C> {
    type Output = Polynomial<C>;
    fn neg(self) -> Polynomial<C> {
        -&self
    }
}

impl<C: Coeff> std::iter::Sum for Polynomial<C> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        let mut terms = BTreeMap::new();
        for p in iter {
            for (m, c) in p.terms {
                accumulate(&mut terms, m, c);
            }
        }
        prune(&mut terms);
        Polynomial { terms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(i: u32) -> VarId {
        VarId::abstract_var('w', i)
    }
    fn pw(i: u32) -> Polynomial {
        Polynomial::var(w(i))
    }

    #[test]
    fn default_zero_eps_is_one_e_minus_twelve() {
        assert_eq!(DEFAULT_ZERO_EPS, 1e-12);
        assert_eq!(zero_epsilon(), DEFAULT_ZERO_EPS);
    }

    #[test]
    fn add_cancels_and_keeps_disjoint_support() {
        assert!((pw(1) + -pw(1)).is_zero());
        let p = (&pw(1) * &pw(2)).scale(&2.0) + pw(3);
        assert_eq!(p.len(), 2);
        assert_eq!(p.coeff(&Monomial::from_pairs([(w(1), 1), (w(2), 1)])), 2.0);
        assert_eq!(p.coeff(&Monomial::var(w(3))), 1.0);
    }

    #[test]
    fn mul_expands() {
        let p = (pw(1) + pw(2)) * pw(1);
        assert_eq!(p.coeff(&Monomial::var_pow(w(1), 2)), 1.0);
        assert_eq!(p.coeff(&Monomial::from_pairs([(w(1), 1), (w(2), 1)])), 1.0);
        assert_eq!(p.len(), 2);
        assert_eq!(Polynomial::one() * p.clone(), p);
        let c = 2.5;
        let s = (pw(1) + pw(2) + pw(3)) * Polynomial::constant(c);
        assert!(s.terms().all(|(m, x)| m.degree() == 1 && *x == c));
    }

    #[test]
    fn checked_mul_enforces_cap() {
        let p = pw(1) * pw(2);
        assert!(p.checked_mul(&p, 4).is_ok());
        assert_eq!(p.checked_mul(&p, 3), Err(PolyError::DegreeCap { degree: 4, cap: 3 }));
    }

    #[test]
    fn substitute_mean_of_block() {
        let t = 4u32;
        let u1 = VarId::u(0);
        let b: HashMap<_, _> = [(u1, Polynomial::linear((0..t).map(|j| (VarId::w(0, j), 1.0 / 2.0))))]
            .into_iter()
            .collect();
        let out = Polynomial::var(u1).substitute(&b);
        assert_eq!(out.len(), 4);
        assert!(out.terms().all(|(_, c)| *c == 0.5));

        let y1 = VarId::abstract_var('y', 1);
        let y2 = VarId::abstract_var('y', 2);
        let b: HashMap<_, _> =
            [(w(1), Polynomial::var(y1) + Polynomial::var(y2))].into_iter().collect();
        let out = pw(1).pow(2).substitute(&b);
        let expect = Polynomial::from_terms([
            (Monomial::var_pow(y1, 2), 1.0),
            (Monomial::from_pairs([(y1, 1), (y2, 1)]), 2.0),
            (Monomial::var_pow(y2, 2), 1.0),
        ]);
        assert_eq!(out, expect);
        assert_eq!(expect.substitute(&HashMap::new()), expect);
    }

    #[test]
    fn evaluate_direct() {
        let p = pw(1) * pw(2) - Polynomial::one();
        let pt: HashMap<_, _> = [(w(1), 2.0), (w(2), 3.0)].into_iter().collect();
        assert_eq!(p.evaluate(&pt).unwrap(), 5.0);
        assert_eq!(Polynomial::<f64>::zero().evaluate(&HashMap::new()).unwrap(), 0.0);
        let x = VarId::abstract_var('x', 0);
        let h2 = (Polynomial::var(x).pow(2) - Polynomial::one()).scale(&(1.0 / 2f64.sqrt()));
        assert_eq!(h2.evaluate_with(|_| Some(1.0)).unwrap(), 0.0);
        assert_eq!(pw(1).evaluate(&HashMap::new()), Err(PolyError::MissingBinding(w(1))));
    }

    #[test]
    fn mon_norms() {
        let p = (pw(1) * pw(2)).scale(&2.0) - pw(3);
        assert_eq!(p.mon_norm(1), 3.0);
        assert!((p.mon_norm(2) - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(Polynomial::<f64>::zero().mon_norm(2), 0.0);
        assert!(((pw(1) + pw(2)) * pw(1)).mon_norm(2) - 2f64.sqrt() < 1e-15);
    }

    #[test]
    fn partition_and_split() {
        let p = pw(1).pow(2) * pw(2) + pw(1) + pw(3);
        let parts = p.partition_by_degree_in(w(1));
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[&0], pw(3));
        assert_eq!(parts[&1], Polynomial::one());
        assert_eq!(parts[&2], pw(2));
        assert_eq!(pw(3).partition_by_degree_in(w(1))[&0], pw(3));

        let q = pw(1).pow(3) + pw(1) * pw(2);
        let (div, rem) = q.split_quadratic(w(1));
        assert_eq!(div, pw(1));
        assert_eq!(rem, pw(1) * pw(2));
        let (div, rem) = pw(2).pow(2).split_quadratic(w(1));
        assert!(div.is_zero());
        assert_eq!(rem, pw(2).pow(2));
    }

    #[test]
    fn exact_rationals() {
        let half = Rational::from_ratio(1, 2);
        let p: Polynomial<Rational> = Polynomial::linear([(w(1), half.clone()), (w(2), half)]);
        let sq = &p * &p;
        assert_eq!(sq.mon_norm_sq(), Rational::from_ratio(1, 16) * Rational::from_i64(6));
        assert!((&sq - &sq).is_zero());
    }
}
