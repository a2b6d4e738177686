//! Monomial-mass versus Gaussian-mass comparisons, and the split of a
//! block polynomial into its omitted, `U₁`-free and `U₁`-linear parts.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::corpus::{random_rational_poly, w_vars};
use super::{run_corpus, LemmaError, LemmaReport};
use crate::decode::{sample_block_values, NoiseSet};
use crate::gauss::{build_u_transform, build_w_transform, GaussianSource, RngSeed};
use crate::hermite::to_hermite;
use crate::poly::{Coeff, Polynomial, Rational, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoeffBoundsConfig {
    /// Shift `η` in `U₁ = bη√T`; must satisfy `η√T < 1`.
    pub eta_shift: f64,
    pub max_t: u32,
    pub max_d: u32,
}

impl Default for CoeffBoundsConfig {
    fn default() -> Self {
        CoeffBoundsConfig { eta_shift: 1e-3, max_t: 20, max_d: 2 }
    }
}

fn u_vars(t: u32) -> Vec<VarId> {
    (0..t).map(VarId::u).collect()
}

/// `E[Q²]` with `U_1..U_{T−1}` i.i.d. standard Gaussians and `U_0 = ±η√T`
/// with equal probability.
fn gaussian_norm_sq(q: &Polynomial, t: u32, eta_shift: f64) -> f64 {
    let rest: BTreeSet<VarId> = (1..t).map(VarId::u).collect();
    let u0 = eta_shift * (t as f64).sqrt();
    [u0, -u0]
        .iter()
        .map(|&v| {
            let fixed = q.substitute(&[(VarId::u(0), Polynomial::constant(v))].into_iter().collect());
            to_hermite(&fixed, &rest).expect("degree within tables").l2_norm_sq_exact().expect("constant coefficients")
        })
        .sum::<f64>()
        / 2.0
}

/// Both directions of the monomial/Gaussian mass comparison for `Q(U)` and
/// `Q̃(W) = Q(A·W)`:
/// `‖Q‖₂ ≤ (20dT)^{5d}‖Q̃‖_mon,2` always, and
/// `‖Q̃‖_mon,2 ≤ (10dT)^{7d}‖Q‖₂` when `Q` is free of `U_0`.
pub fn verify_coeff_bounds(q: &Polynomial, d: u32, t: u32, cfg: &CoeffBoundsConfig) -> Result<LemmaReport, LemmaError> {
    if d == 0 || d > cfg.max_d || t > cfg.max_t {
        return Err(LemmaError::Precondition(format!(
            "need 1 ≤ d ≤ {} and T ≤ {}, got d = {d}, T = {t}",
            cfg.max_d, cfg.max_t
        )));
    }
    if q.degree() > d {
        return Err(LemmaError::Precondition(format!("Q has degree {} > {d}", q.degree())));
    }
    if let Some(v) = q.variables().into_iter().find(|v| !matches!(v, VarId::U(i) if *i < t)) {
        return Err(LemmaError::Precondition(format!("Q uses unexpected variable {v}")));
    }
    if cfg.eta_shift * (t as f64).sqrt() >= 1.0 {
        return Err(LemmaError::Precondition("η√T must be below 1".into()));
    }
    let qt = q.substitute(&build_u_transform(t as usize).u_to_w_bindings());
    let mon2 = qt.mon_norm(2);
    let l2 = gaussian_norm_sq(q, t, cfg.eta_shift).sqrt();
    let (df, tf) = (d as f64, t as f64);
    let c1 = (20.0 * df * tf).powf(5.0 * df);
    let c2 = (10.0 * df * tf).powf(7.0 * df);
    let part1 = l2 <= c1 * mon2;
    let free_of_u0 = q.is_free_of(|v| v == VarId::u(0));
    let part2 = !free_of_u0 || mon2 <= c2 * l2;
    let mut report = LemmaReport::new("coeff-bounds", json!({ "d": d, "T": t, "eta_shift": cfg.eta_shift }))
        .tolerance("part1_factor", c1)
        .tolerance("part2_factor", c2)
        .stat("l2_norm", l2)
        .stat("mon2_norm", mon2)
        .stat("part2_checked", if free_of_u0 { 1.0 } else { 0.0 });
    if mon2 > 0.0 {
        report = report.stat("l2_over_mon2", l2 / mon2);
    }
    Ok(report.conclude(part1 && part2, || BTreeMap::from([("Q".into(), q.to_text())])))
}

pub fn coeff_bounds_suite(d: u32, t: u32, trials: usize, cfg: &CoeffBoundsConfig, seed: RngSeed) -> LemmaReport {
    run_corpus("coeff-bounds", json!({ "d": d, "T": t }), trials, seed, |rng| {
        let mut q = random_rational_poly(&u_vars(t), d, 0.5, rng).to_f64();
        if rng.random_bool(0.5) {
            q = q.filter_terms(|m| m.exponent(VarId::u(0)) == 0);
        }
        verify_coeff_bounds(&q, d, t, cfg).expect("corpus meets preconditions")
    })
}

/// `‖P₁P₂‖_mon,2 ≤ ‖P₁‖_mon,1·‖P₂‖_mon,2`, compared exactly after squaring.
pub fn verify_mon_submult(p1: &Polynomial<Rational>, p2: &Polynomial<Rational>) -> LemmaReport {
    let lhs = (p1 * p2).mon_norm_sq();
    let n1 = p1.mon_norm1_exact();
    let rhs = n1.clone() * n1 * p2.mon_norm_sq();
    let mut report = LemmaReport::new("mon-submult", json!({}));
    if !rhs.is_zero() {
        report = report.stat("ratio", (lhs.to_f64() / rhs.to_f64()).sqrt());
    }
    report.conclude(lhs <= rhs, || BTreeMap::from([("P1".into(), p1.to_text()), ("P2".into(), p2.to_text())]))
}

pub fn mon_submult_suite(t: u32, d: u32, trials: usize, seed: RngSeed) -> LemmaReport {
    run_corpus("mon-submult", json!({ "T": t, "d": d }), trials, seed, |rng| {
        let p1 = random_rational_poly(&w_vars(t), d, 0.5, rng);
        let p2 = random_rational_poly(&w_vars(t), d, 0.5, rng);
        verify_mon_submult(&p1, &p2)
    })
}

/// `P = P_omit + Q₀ + U₀·Q₁` over the noisy `Z`, the means `U` and the
/// remaining `W_{ij}` (`i ≥ 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct QDecomposition {
    pub omit: Polynomial,
    pub q0: Polynomial,
    pub q1: Polynomial,
}

impl QDecomposition {
    pub fn compute(p: &Polynomial, noise: &NoiseSet) -> Self {
        let ut = build_u_transform(noise.t() as usize);
        let x = p.substitute(&noise.rewrite_bindings(|_| true)).substitute(&ut.w_to_u_bindings());
        let omit = x.filter_terms(|m| m.vars().iter().any(|&(v, _)| matches!(v, VarId::W { index, .. } if index > 0)));
        let rest = &x - &omit;
        let u0 = VarId::u(0);
        let q0 = rest.filter_terms(|m| m.exponent(u0) == 0);
        let q1 = Polynomial::from_terms(
            rest.terms()
                .filter(|(m, _)| m.exponent(u0) > 0)
                .map(|(m, &c)| {
                    let (e, cof) = m.split_var(u0);
                    (cof.mul(&crate::poly::Monomial::var_pow(u0, e - 1)), c)
                })
                .collect::<Vec<_>>(),
        );
        QDecomposition { omit, q0, q1 }
    }

    /// `P_omit + Q₀ + U₀·Q₁` mapped back to block variables.
    pub fn reassemble(&self, noise: &NoiseSet) -> Polynomial {
        let ut = build_u_transform(noise.t() as usize);
        let sum = &(&self.omit + &self.q0) + &(&Polynomial::var(VarId::u(0)) * &self.q1);
        sum.substitute(&ut.u_to_w_bindings()).substitute(&noise.restore_bindings(|_| true))
    }
}

/// Hybrid values `(W, Z, U)` of one draw of block values.
fn hybrid_values(noise: &NoiseSet, y: &[Vec<f64>]) -> BTreeMap<VarId, f64> {
    let mut out = BTreeMap::new();
    let mut means = vec![0.0; noise.t() as usize];
    for j in 0..noise.t() {
        let clean = noise.non_noisy(j);
        if !clean.is_empty() {
            let vals: Vec<f64> = clean.iter().map(|&i| y[j as usize][i as usize]).collect();
            let w = build_w_transform(clean.len()).forward(&vals);
            means[j as usize] = w[0];
            for (i, x) in w.into_iter().enumerate() {
                out.insert(VarId::w(i as u32, j), x);
            }
        }
        for i in noise.noisy_in(j) {
            out.insert(VarId::z(i, j), y[j as usize][i as usize]);
        }
    }
    for (t, u) in build_u_transform(noise.t() as usize).forward(&means).into_iter().enumerate() {
        out.insert(VarId::u(t as u32), u);
    }
    out
}

/// Splits `P` into `P_omit + Q₀ + U₀Q₁` and checks exact reassembly
/// (within `1e−9`), that `P_omit` vanishes on `draws` samples of the test
/// distribution given `ℐ`, and that `Q₀` is free of `U₀`.
pub fn verify_q_decomposition(
    p: &Polynomial,
    noise: &NoiseSet,
    draws: usize,
    eta: f64,
    seed: RngSeed,
) -> Result<(LemmaReport, QDecomposition), LemmaError> {
    if let Some(v) = p
        .variables()
        .into_iter()
        .find(|v| !matches!(*v, VarId::Block { index, block } if index < noise.k() && block < noise.t()))
    {
        return Err(LemmaError::Precondition(format!("P uses unexpected variable {v}")));
    }
    let dec = QDecomposition::compute(p, noise);
    let tol = 1e-9;
    let residual = (&dec.reassemble(noise) - p).max_abs_coeff();
    let omit_max = (0..draws)
        .into_par_iter()
        .map(|s| {
            let mut rng = seed.derive(s as u64).rng();
            let b = if rng.random_bool(0.5) { 1 } else { -1 };
            let y = sample_block_values(noise, b, eta, GaussianSource::Exact, &mut rng);
            let vals = hybrid_values(noise, &y);
            dec.omit.evaluate_with(|v| Some(vals.get(&v).copied().unwrap_or(0.0))).expect("all bound").abs()
        })
        .reduce(|| 0.0, f64::max);
    let q0_free = dec.q0.is_free_of(|v| v == VarId::u(0));
    let report = LemmaReport::new("q-decomp", json!({ "k": noise.k(), "T": noise.t(), "noisy": noise.len() }))
        .tolerance("reassembly", tol)
        .tolerance("omit_value", tol)
        .stat("reassembly_residual", residual)
        .stat("omit_max_abs", omit_max)
        .stat("q1_zero", if dec.q1.is_zero() { 1.0 } else { 0.0 })
        .conclude(residual <= tol && omit_max <= tol && q0_free, || {
            BTreeMap::from([
                ("P".into(), p.to_text()),
                ("noise".into(), serde_json::to_string(noise).expect("serializable")),
            ])
        });
    Ok((report, dec))
}

pub fn q_decomposition_suite(k: u32, t: u32, d: u32, trials: usize, seed: RngSeed) -> LemmaReport {
    let vars: Vec<VarId> = (0..t).flat_map(|j| (0..k).map(move |i| VarId::block(i, j))).collect();
    run_corpus("q-decomp", json!({ "k": k, "T": t, "d": d }), trials, seed, |rng| {
        let p = random_rational_poly(&vars, d, 0.5, rng).to_f64();
        let noise = NoiseSet::sample(k, t, 0.2, rng);
        let sub = RngSeed::new(rng.random());
        verify_q_decomposition(&p, &noise, 1000, 1e-3, sub).expect("corpus meets preconditions").0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_u_variable() {
        let q = Polynomial::var(VarId::u(1));
        let r = verify_coeff_bounds(&q, 1, 10, &CoeffBoundsConfig::default()).unwrap();
        assert!(r.holds());
        assert!((r.statistics["l2_norm"] - 1.0).abs() < 1e-12);
        assert!((r.statistics["mon2_norm"] - 1.0).abs() < 1e-12);
        let z = verify_coeff_bounds(&Polynomial::zero(), 1, 10, &CoeffBoundsConfig::default()).unwrap();
        assert!(z.holds());
    }

    #[test]
    fn submult_examples() {
        let w = |j| Polynomial::<Rational>::var(VarId::w(0, j));
        let r = verify_mon_submult(&(&w(0) + &w(1)), &w(0));
        assert!(r.holds());
        assert!((r.statistics["ratio"] - 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(verify_mon_submult(&w(0), &Polynomial::zero()).holds());
    }

    #[test]
    fn single_clean_block_variable() {
        let noise = NoiseSet::new(3, 4, [(2, 1)]).unwrap();
        let p = Polynomial::var(VarId::block(0, 0));
        let (r, dec) = verify_q_decomposition(&p, &noise, 100, 1e-3, RngSeed::new(1)).unwrap();
        assert!(r.holds());
        assert!(dec.q1.is_constant());
        assert!((dec.q1.constant_term() - 0.5).abs() < 1e-12);
        let z = Polynomial::var(VarId::block(2, 1)).pow(2);
        let (r, dec) = verify_q_decomposition(&z, &noise, 100, 1e-3, RngSeed::new(1)).unwrap();
        assert!(r.holds());
        assert!(dec.omit.is_zero() && dec.q1.is_zero());
    }
}
