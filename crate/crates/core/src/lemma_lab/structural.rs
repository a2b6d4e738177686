//! Exact checks of the linear-mass bound and its two ingredients: variable
//! removal and the non-quadratic lower bound.

use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;
use rand::Rng;
use serde_json::json;

use super::corpus::{random_rational, random_rational_poly, w_vars, xyz};
use super::{run_corpus, LemmaError, LemmaReport};
use crate::gauss::RngSeed;
use crate::poly::{rational_pow, Coeff, Monomial, Polynomial, Rational, VarId};

type QPoly = Polynomial<Rational>;

fn q(n: i64) -> Rational {
    Rational::from_i64(n)
}

fn ratio(num: &Rational, den: &Rational) -> f64 {
    if den.is_zero() {
        return 0.0;
    }
    (Coeff::to_f64(num) / Coeff::to_f64(den)).sqrt()
}

fn check_support(p: &QPoly, allowed: &[VarId], d: u32, what: &str) -> Result<(), LemmaError> {
    if p.degree() > d {
        return Err(LemmaError::Precondition(format!("{what} has degree {} > {d}", p.degree())));
    }
    if let Some(v) = p.variables().into_iter().find(|v| !allowed.contains(v)) {
        return Err(LemmaError::Precondition(format!("{what} uses unexpected variable {v}")));
    }
    Ok(())
}

/// For `Q = (Σ_j W_j)·S`, counts the `j` with `‖Q_{j,1}‖ ≥ (20dT)^{−3^d}‖S‖`;
/// holds when the count is at least `T/2`.
pub fn verify_robust_polynomial(s: &QPoly, d: u32, t: u32) -> Result<LemmaReport, LemmaError> {
    if t <= 2 * d {
        return Err(LemmaError::Precondition(format!("need T > 2d, got T = {t}, d = {d}")));
    }
    let vars = w_vars(t);
    check_support(s, &vars, d, "S")?;
    let report = LemmaReport::new("robust-poly", json!({ "d": d, "T": t }))
        .tolerance("bound", (20.0 * d as f64 * t as f64).powf(-(3f64.powi(d as i32))));
    let s_sq = s.mon_norm_sq();
    if s_sq.is_zero() {
        return Ok(report.stat("qualifying", t as f64).note("‖S‖ = 0, vacuous"));
    }
    let sum: QPoly = Polynomial::linear(vars.iter().map(|&v| (v, q(1))));
    let big_q = &sum * s;
    let scale = rational_pow(20 * d as i64 * t as i64, 2 * 3i64.pow(d));
    let mut ratios = Vec::with_capacity(t as usize);
    let mut qualifying = 0;
    for &v in &vars {
        let part = big_q.partition_by_degree_in(v).remove(&1).unwrap_or_else(Polynomial::zero);
        let sq = part.mon_norm_sq();
        if sq.clone() * scale.clone() >= s_sq {
            qualifying += 1;
        }
        ratios.push(ratio(&sq, &s_sq));
    }
    ratios.sort_by(|a, b| b.total_cmp(a));
    let half = (t as usize).div_ceil(2);
    Ok(report
        .stat("qualifying", qualifying as f64)
        .stat("ratio_at_half", ratios[half - 1])
        .conclude(2 * qualifying >= t, || BTreeMap::from([("S".into(), s.to_text())])))
}

pub fn robust_polynomial_suite(d: u32, t: u32, trials: usize, seed: RngSeed) -> LemmaReport {
    run_corpus("robust-poly", json!({ "d": d, "T": t }), trials, seed, |rng| {
        let s = random_rational_poly(&w_vars(t), d, 0.5, rng);
        verify_robust_polynomial(&s, d, t).expect("corpus meets preconditions")
    })
}

/// Inputs of the variable removal identity
/// `(aX−Y−Z)S₁(Y,Z) + Δ^X + X²R₁ = (aY−X−Z)S₂(X,Z) + Δ^Y + Y²R₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableRemovalInstance {
    pub a: i64,
    pub d: u32,
    pub s1: QPoly,
    pub s2: QPoly,
    pub r1: QPoly,
    pub r2: QPoly,
    pub delta_x: QPoly,
    pub delta_y: QPoly,
}

/// `S₁ = ((a+1)Y − Z)·C(Z) + Y²A₁(Y,Z) + Δ(Y,Z)` with the intermediate
/// pieces `S₁ = Y²A₁ + Y·B₁(Z) + Z·C₁(Z) + D₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct RemovalDecomposition {
    pub c: QPoly,
    pub a1: QPoly,
    pub delta: QPoly,
    pub b1: QPoly,
    pub c1: QPoly,
    pub d1: Rational,
}

fn linear_xyz(a: i64, first: VarId, second: VarId, third: VarId) -> QPoly {
    Polynomial::linear([(first, q(a)), (second, q(-1)), (third, q(-1))])
}

fn rename(p: &QPoly, from: VarId, to: VarId) -> QPoly {
    p.substitute(&HashMap::from([(from, Polynomial::var(to))]))
}

fn divide_by(m: &Monomial, v: VarId, e: u32) -> Monomial {
    let (have, rest) = m.split_var(v);
    rest.mul(&Monomial::var_pow(v, have - e))
}

impl VariableRemovalInstance {
    /// Left side minus right side of the identity.
    pub fn identity_residual(&self) -> QPoly {
        let (x, y, z) = xyz();
        let xx = Polynomial::var(x).pow(2);
        let yy = Polynomial::var(y).pow(2);
        let lhs = &(&(&linear_xyz(self.a, x, y, z) * &self.s1) + &self.delta_x) + &(&xx * &self.r1);
        let rhs = &(&(&linear_xyz(self.a, y, x, z) * &self.s2) + &self.delta_y) + &(&yy * &self.r2);
        &lhs - &rhs
    }

    fn check(&self) -> Result<(), LemmaError> {
        let (x, y, z) = xyz();
        if self.a < 1 {
            return Err(LemmaError::Precondition(format!("a must be at least 1, got {}", self.a)));
        }
        if self.d < 1 {
            return Err(LemmaError::Precondition("d must be at least 1".into()));
        }
        let d = self.d as i64;
        let deg = |n: i64| -> Option<u32> { (n >= 0).then_some(n as u32) };
        for (p, allowed, bound, what) in [
            (&self.s1, vec![y, z], deg(d - 1), "S1"),
            (&self.s2, vec![x, z], deg(d - 1), "S2"),
            (&self.r1, vec![x, y, z], deg(d - 2), "R1"),
            (&self.r2, vec![x, y, z], deg(d - 2), "R2"),
            (&self.delta_x, vec![x, y, z], deg(d), "ΔX"),
            (&self.delta_y, vec![x, y, z], deg(d), "ΔY"),
        ] {
            match bound {
                Some(b) => check_support(p, &allowed, b, what)?,
                None if !p.is_zero() => {
                    return Err(LemmaError::Precondition(format!("{what} must vanish when d = {d}")));
                }
                None => {}
            }
        }
        if !self.identity_residual().is_zero() {
            return Err(LemmaError::Precondition("the removal identity does not hold".into()));
        }
        Ok(())
    }

    pub fn inputs(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("a".into(), self.a.to_string()),
            ("d".into(), self.d.to_string()),
            ("S1".into(), self.s1.to_text()),
            ("S2".into(), self.s2.to_text()),
            ("R1".into(), self.r1.to_text()),
            ("R2".into(), self.r2.to_text()),
            ("DX".into(), self.delta_x.to_text()),
            ("DY".into(), self.delta_y.to_text()),
        ])
    }
}

/// Pieces of an error polynomial: constants at `X` and `Z`, and the
/// `Z`-polynomials multiplying `Z²` and `YZ`.
struct ErrorParts {
    at_x: Rational,
    at_z: Rational,
    z2: QPoly,
    yz: QPoly,
}

fn error_parts(delta: &QPoly) -> ErrorParts {
    let (x, y, z) = xyz();
    let mut at_x = q(0);
    let mut at_z = q(0);
    let mut z2 = Vec::new();
    let mut yz = Vec::new();
    for (m, c) in delta.terms() {
        let (ex, ey, ez) = (m.exponent(x), m.exponent(y), m.exponent(z));
        match (ex, ey, ez) {
            (1, 0, 0) => at_x = c.clone(),
            (0, 0, 1) => at_z = c.clone(),
            (0, 0, e) if e >= 2 => z2.push((divide_by(m, z, 2), c.clone())),
            (0, 1, e) if e >= 1 => yz.push((divide_by(&divide_by(m, y, 1), z, 1), c.clone())),
            _ => {}
        }
    }
    ErrorParts { at_x, at_z, z2: Polynomial::from_terms(z2), yz: Polynomial::from_terms(yz) }
}

/// Coefficient matching on `S₁`, checked against the closed forms
/// `D₁ = −(ΔY_Z − ΔX_Z − ΔY_X + ΔX_X)/(a+1)` and
/// `B₁ = −[(a+1)C₁ + a(ΔY_{Z²} − ΔX_{Z²}) + ΔY_{YZ} − ΔX_{YZ}]`.
/// The flag reports whether the closed forms agree with the matching.
fn decompose(inst: &VariableRemovalInstance) -> (RemovalDecomposition, bool) {
    let (_, y, z) = xyz();
    let (mut a1, mut b1, mut c1) = (Vec::new(), Vec::new(), Vec::new());
    let mut d1 = q(0);
    for (m, c) in inst.s1.terms() {
        match (m.exponent(y), m.exponent(z)) {
            (e, _) if e >= 2 => a1.push((divide_by(m, y, 2), c.clone())),
            (1, _) => b1.push((divide_by(m, y, 1), c.clone())),
            (0, e) if e >= 1 => c1.push((divide_by(m, z, 1), c.clone())),
            _ => d1 = c.clone(),
        }
    }
    let (a1, b1, c1): (QPoly, QPoly, QPoly) =
        (Polynomial::from_terms(a1), Polynomial::from_terms(b1), Polynomial::from_terms(c1));
    let ex = error_parts(&inst.delta_x);
    let ey = error_parts(&inst.delta_y);
    let a = q(inst.a);
    let a_plus = q(inst.a + 1);
    let d1_formula = -(ey.at_z.clone() - ex.at_z.clone() - ey.at_x.clone() + ex.at_x.clone()) / a_plus.clone();
    let err_z: QPoly = &(&ey.z2 - &ex.z2).scale(&a) + &(&ey.yz - &ex.yz);
    let b1_formula = -&(&c1.scale(&a_plus) + &err_z);
    let c = -&c1;
    let delta_formula = &(&Polynomial::var(y) * &err_z).scale(&q(-1)) + &Polynomial::constant(d1_formula.clone());
    let lead = Polynomial::linear([(y, a_plus), (z, q(-1))]);
    let yy = Polynomial::var(y).pow(2);
    let delta = &(&inst.s1 - &(&lead * &c)) - &(&yy * &a1);
    let formulas_agree = d1_formula == d1 && b1_formula == b1 && delta_formula == delta;
    (RemovalDecomposition { c, a1, delta, b1, c1, d1 }, formulas_agree)
}

/// Recovers `C`, `A₁`, `Δ` by coefficient matching and checks the
/// decomposition identity, the closed forms of `D₁` and `B₁`, the degree
/// bounds and `‖Δ‖ ≤ 20a·max(‖Δ^X‖, ‖Δ^Y‖)`, all exactly.
pub fn verify_variable_removal(
    inst: &VariableRemovalInstance,
) -> Result<(LemmaReport, RemovalDecomposition), LemmaError> {
    inst.check()?;
    let (_, y, z) = xyz();
    let (dec, formulas_agree) = decompose(inst);
    let lead = Polynomial::linear([(y, q(inst.a + 1)), (z, q(-1))]);
    let rebuilt = &(&(&lead * &dec.c) + &(&Polynomial::var(y).pow(2) * &dec.a1)) + &dec.delta;
    let identity = rebuilt == inst.s1;
    let d = inst.d as i64;
    let within = |p: &QPoly, bound: i64| p.is_zero() || (p.degree() as i64) <= bound;
    let degrees = within(&dec.c, d - 2) && within(&dec.a1, d - 3) && within(&dec.delta, d - 1);
    let dmax = inst.delta_x.mon_norm_sq().max(inst.delta_y.mon_norm_sq());
    let delta_sq = dec.delta.mon_norm_sq();
    let norm_ok = delta_sq <= q(400 * inst.a * inst.a) * dmax.clone();
    let report = LemmaReport::new("var-removal", json!({ "a": inst.a, "d": inst.d }))
        .tolerance("norm_factor", 20.0 * inst.a as f64)
        .stat("delta_ratio", ratio(&delta_sq, &dmax))
        .stat("delta_zero", if dec.delta.is_zero() { 1.0 } else { 0.0 })
        .stat("formulas_agree", if formulas_agree { 1.0 } else { 0.0 })
        .conclude(identity && degrees && norm_ok && formulas_agree, || inst.inputs());
    Ok((report, dec))
}

fn random_in<R: Rng + ?Sized>(vars: &[VarId], deg: i64, rng: &mut R) -> QPoly {
    if deg < 0 {
        Polynomial::zero()
    } else {
        random_rational_poly(vars, deg as u32, 0.5, rng)
    }
}

/// An instance with `Δ^X = Δ^Y = 0`: `S₁ = ((a+1)Y − Z)C(Z) + Y²A₁(Y,Z)`,
/// `S₂` its mirror in `X`, and `R₁`, `R₂` completing the identity.
pub fn structured_removal_instance<R: Rng + ?Sized>(a: i64, d: u32, rng: &mut R) -> VariableRemovalInstance {
    let (x, y, z) = xyz();
    let d = d as i64;
    let c = random_in(&[z], d - 2, rng);
    let a1 = random_in(&[y, z], d - 3, rng);
    let lead = Polynomial::linear([(y, q(a + 1)), (z, q(-1))]);
    let s1 = &(&lead * &c) + &(&Polynomial::var(y).pow(2) * &a1);
    let s2 = rename(&s1, y, x);
    let a1x = rename(&a1, y, x);
    let c_part = c.scale(&q(-(a + 1)));
    let r1 = &c_part + &(&linear_xyz(a, y, x, z) * &a1x);
    let r2 = &c_part + &(&linear_xyz(a, x, y, z) * &a1);
    VariableRemovalInstance {
        a,
        d: d as u32,
        s1,
        s2,
        r1,
        r2,
        delta_x: Polynomial::zero(),
        delta_y: Polynomial::zero(),
    }
}

/// A structured instance with every polynomial perturbed at a random scale
/// `10^{−s}`, `s ∈ {0,…,3}`; `Δ^X` is random and `Δ^Y` restores the identity.
pub fn perturbed_removal_instance<R: Rng + ?Sized>(a: i64, d: u32, rng: &mut R) -> VariableRemovalInstance {
    let (x, y, z) = xyz();
    let mut inst = structured_removal_instance(a, d, rng);
    let di = d as i64;
    let scale = rational_pow(10, -(rng.random_range(0..=3)));
    let mut noise = |vars: &[VarId], deg: i64| random_in(vars, deg, rng).scale(&scale);
    inst.s1 = &inst.s1 + &noise(&[y, z], di - 1);
    inst.s2 = &inst.s2 + &noise(&[x, z], di - 1);
    inst.r1 = &inst.r1 + &noise(&[x, y, z], di - 2);
    inst.r2 = &inst.r2 + &noise(&[x, y, z], di - 2);
    inst.delta_x = noise(&[x, y, z], di);
    inst.delta_y = Polynomial::zero();
    inst.delta_y = inst.identity_residual();
    inst
}

pub fn variable_removal_suite(a: i64, d: u32, trials: usize, seed: RngSeed) -> LemmaReport {
    run_corpus("var-removal", json!({ "a": a, "d": d }), trials, seed, |rng| {
        let structured = rng.random_bool(0.5);
        let inst = if structured {
            structured_removal_instance(a, d, rng)
        } else {
            perturbed_removal_instance(a, d, rng)
        };
        let (report, dec) = verify_variable_removal(&inst).expect("generated instances satisfy the identity");
        if structured && !dec.delta.is_zero() {
            return report.conclude(false, || inst.inputs()).note("structured instance produced nonzero Δ");
        }
        report
    })
}

/// Result of probing the iterated-square chain: whether every `R_j`
/// (`j < d`) is at most `4^{−2^d}‖P‖`, and whether then
/// `‖L_j‖ ≤ 4·(4^{−2^d})^{1/2^{j−1}}‖P‖` for all `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainProbe {
    pub hypothesis: bool,
    pub chain_holds: bool,
    /// `‖L_j‖/‖P‖` for `j = 1..=d`.
    pub l_ratios: Vec<f64>,
}

/// The chain over the first `d` of `vars`, where `L_j` collects the terms
/// of `P` not divisible by `W_1²⋯W_j²`. The degree of `P` is unrestricted.
pub fn claim_chain_probe(p: &QPoly, vars: &[VarId], d: u32) -> ChainProbe {
    let p_sq = p.mon_norm_sq();
    let d = d.min(vars.len() as u32) as usize;
    // η² = 4^{−2^{d+1}}
    let eta_sq = rational_pow(4, -(1i64 << (d + 1)));
    let hypothesis = vars[..d].iter().all(|&v| p.split_quadratic(v).1.mon_norm_sq() <= eta_sq.clone() * p_sq.clone());
    let mut chain_holds = true;
    let mut l_ratios = Vec::with_capacity(d);
    for j in 1..=d {
        let l = p.filter_terms(|m| vars[..j].iter().any(|&v| m.exponent(v) < 2));
        let l_sq = l.mon_norm_sq();
        // (4·η^{1/2^{j−1}})² = 16·4^{−2^{d−j+2}}
        let bound = q(16) * rational_pow(4, -(1i64 << (d + 2 - j)));
        if l_sq > bound * p_sq.clone() {
            chain_holds = false;
        }
        l_ratios.push(ratio(&l_sq, &p_sq));
    }
    ChainProbe { hypothesis, chain_holds: !hypothesis || chain_holds, l_ratios }
}

/// Splits `P = W_j²·P_j + R_j` for each `j`; holds when some
/// `‖R_j‖ > 4^{−2^d}‖P‖`. The iterated-square chain is probed alongside.
pub fn verify_lower_bound(p: &QPoly, d: u32, t: u32) -> Result<LemmaReport, LemmaError> {
    if t <= d {
        return Err(LemmaError::Precondition(format!("need T > d, got T = {t}, d = {d}")));
    }
    let vars = w_vars(t);
    check_support(p, &vars, d, "P")?;
    let p_sq = p.mon_norm_sq();
    if p_sq.is_zero() {
        return Err(LemmaError::Precondition("‖P‖ must be positive".into()));
    }
    let threshold = rational_pow(4, -(1i64 << (d + 1)));
    let mut best = 0.0f64;
    let mut found = false;
    for &v in &vars {
        let r_sq = p.split_quadratic(v).1.mon_norm_sq();
        found |= r_sq > threshold.clone() * p_sq.clone();
        best = best.max(ratio(&r_sq, &p_sq));
    }
    let chain = claim_chain_probe(p, &vars, d);
    Ok(LemmaReport::new("lower-bound", json!({ "d": d, "T": t }))
        .tolerance("eta_mass", 4f64.powf(-(2f64.powi(d as i32))))
        .stat("best_ratio", best)
        .stat("chain_hypothesis", if chain.hypothesis { 1.0 } else { 0.0 })
        .conclude(found && chain.chain_holds, || BTreeMap::from([("P".into(), p.to_text())])))
}

pub fn lower_bound_suite(d: u32, t: u32, trials: usize, seed: RngSeed) -> LemmaReport {
    run_corpus("lower-bound", json!({ "d": d, "T": t }), trials, seed, |rng| {
        let mut p = random_rational_poly(&w_vars(t), d, 0.5, rng);
        while p.is_zero() {
            p = Polynomial::constant(random_rational(rng));
        }
        verify_lower_bound(&p, d, t).expect("corpus meets preconditions")
    })
}
