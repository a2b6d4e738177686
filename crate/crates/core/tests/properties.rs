use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use proptest::prelude::*;
use rand::Rng;
use ptf_hardness::decode::{
    coefficient_tensor, gamma_sets, hybrid_rewrite, CoefficientTensor, DecodeConfig, NoiseSet,
};
use ptf_hardness::gauss::{build_u_transform, build_w_transform, sample_deltas, GaussianSource, RngSeed};
use ptf_hardness::hermite::{from_hermite, to_hermite};
use ptf_hardness::label_cover::generate_yes_instance;
use ptf_hardness::lemma_lab::{perturbed_removal_instance, verify_variable_removal};
use ptf_hardness::poly::{Monomial, Polynomial, Rational, VarId};
use ptf_hardness::ptf::dictator_linear_form;
use ptf_hardness::reduction::{emit_instance, TestParams};

fn poly_over(vars: Vec<VarId>, max_exp: u32, max_terms: usize) -> impl Strategy<Value = Polynomial> {
    let n = vars.len();
    prop::collection::vec((prop::collection::vec(0..=max_exp, n), -6i32..=6), 0..=max_terms).prop_map(move |terms| {
        Polynomial::from_terms(terms.into_iter().map(|(exps, c)| {
            (Monomial::from_pairs(vars.iter().copied().zip(exps).filter(|&(_, e)| e > 0)), c as f64)
        }))
    })
}

/// Terms of total degree at most `d`, each a product of picks from `vars`.
fn poly_deg(vars: Vec<VarId>, d: usize, max_terms: usize) -> impl Strategy<Value = Polynomial> {
    let n = vars.len();
    prop::collection::vec((prop::collection::vec(0..n, 0..=d), -6i32..=6), 0..=max_terms).prop_map(move |terms| {
        Polynomial::from_terms(
            terms.into_iter().map(|(picks, c)| (Monomial::from_pairs(picks.into_iter().map(|i| (vars[i], 1))), c as f64)),
        )
    })
}

fn xyz_vars() -> Vec<VarId> {
    (0..3).map(|i| VarId::abstract_var('x', i)).collect()
}

fn block_vars(k: u32, t: u32) -> Vec<VarId> {
    (0..t).flat_map(|j| (0..k).map(move |i| VarId::block(i, j))).collect()
}

fn to_rational(p: &Polynomial) -> Polynomial<Rational> {
    p.map_coeffs(|&c| Rational::from_integer(BigInt::from(c as i64)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ring_laws(a in poly_over(xyz_vars(), 2, 5), b in poly_over(xyz_vars(), 2, 5), c in poly_over(xyz_vars(), 2, 5)) {
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert!((&(&a * &b) * &c).approx_eq(&(&a * &(&b * &c)), 1e-9));
        prop_assert!((&a * &(&b + &c)).approx_eq(&(&(&a * &b) + &(&a * &c)), 1e-9));
        prop_assert!((&a - &a).is_zero());
    }

    #[test]
    fn w_and_u_substitutions_invert(p in poly_deg(block_vars(4, 3), 3, 6)) {
        let labels = [0u32, 1, 2, 3];
        let mut to_w = HashMap::new();
        let mut to_y = HashMap::new();
        let wt = build_w_transform(4);
        for j in 0..3 {
            to_w.extend(wt.y_to_w_bindings(&labels, j));
            to_y.extend(wt.w_to_y_bindings(&labels, j));
        }
        let w = p.substitute(&to_w);
        prop_assert!(w.substitute(&to_y).approx_eq(&p, 1e-9));
        let ut = build_u_transform(3);
        let u = w.substitute(&ut.w_to_u_bindings());
        prop_assert!(u.substitute(&ut.u_to_w_bindings()).approx_eq(&w, 1e-9));
    }

    #[test]
    fn partitions_round_trip(p in poly_over(xyz_vars(), 3, 8)) {
        let v = VarId::abstract_var('x', 1);
        let rebuilt: Polynomial = p
            .partition_by_degree_in(v)
            .into_iter()
            .map(|(e, part)| &Polynomial::term(Monomial::var_pow(v, e), 1.0) * &part)
            .sum();
        prop_assert_eq!(&rebuilt, &p);
        let (div, rem) = p.split_quadratic(v);
        prop_assert_eq!(&(&(&Polynomial::var(v).pow(2) * &div) + &rem), &p);
        prop_assert!(rem.terms().all(|(m, _)| m.exponent(v) < 2));
    }

    #[test]
    fn l2_mass_below_l1_mass(p in poly_over(xyz_vars(), 3, 8)) {
        prop_assert!(p.mon_norm(2) <= p.mon_norm(1) + 1e-12);
    }

    #[test]
    fn text_round_trip(p in poly_deg(block_vars(3, 2), 3, 6)) {
        prop_assert_eq!(Polynomial::from_text(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn hermite_round_trip_exact(p in poly_over(xyz_vars(), 4, 6)) {
        let q = to_rational(&p);
        let vars: BTreeSet<VarId> = xyz_vars().into_iter().collect();
        let e = to_hermite(&q, &vars).unwrap();
        prop_assert_eq!(from_hermite(&e).unwrap(), q);
    }

    #[test]
    fn hermite_norm_dominates_largest_coefficient(p in poly_over(xyz_vars(), 2, 6)) {
        prop_assume!(!p.is_zero());
        let vars: BTreeSet<VarId> = xyz_vars().into_iter().collect();
        let d = p.degree().max(1);
        let alpha = p.max_abs_coeff();
        let binom = (1..=d as u64).fold(1u64, |acc, i| acc * (3 + i) / i) as f64;
        let norm = to_hermite(&p, &vars).unwrap().l2_norm().unwrap();
        prop_assert!(norm >= alpha / ((d as f64).powi(d as i32) * binom));
    }

    #[test]
    fn deltas_sum_to_zero_and_streams_reproduce(seed in any::<u64>(), t in 2usize..12) {
        let a = sample_deltas(t, &mut RngSeed::new(seed).rng()).unwrap();
        let b = sample_deltas(t, &mut RngSeed::new(seed).rng()).unwrap();
        prop_assert!(a.iter().sum::<f64>().abs() < 1e-12);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn gamma_sets_nest_and_are_small(values in prop::collection::vec(-3.0f64..3.0, 1..40), r in 0u32..3) {
        let cfg = DecodeConfig::new(0.2, r, RngSeed::new(0));
        let g = gamma_sets(&CoefficientTensor { jstar: 0, dstar: 0, values }, &cfg);
        prop_assert!(g.gamma0.is_subset(&g.gamma1));
        prop_assert!((g.gamma0.len() as f64) < 4.0 / cfg.nu.powi(2) || g.gamma0.is_empty());
        prop_assert!((g.gamma1.len() as f64) < 1.0 / cfg.gamma1_factor() || g.gamma1.is_empty());
    }

    #[test]
    fn hybrid_rewrite_round_trips(p in poly_deg(block_vars(3, 3), 2, 6), seed in any::<u64>(), jstar in 0u32..3) {
        let noise = NoiseSet::sample(3, 3, 0.3, &mut RngSeed::new(seed).rng());
        let h = hybrid_rewrite(&p, &noise, jstar).unwrap();
        prop_assert!(h.reassemble().unwrap().approx_eq(&p, 1e-9));
    }

    #[test]
    fn removal_formulas_match_closed_forms(seed in any::<u64>(), a in 1i64..4) {
        let inst = perturbed_removal_instance(a, 3, &mut RngSeed::new(seed).rng());
        let (report, dec) = verify_variable_removal(&inst).unwrap();
        prop_assert!(report.holds());
        prop_assert_eq!(report.statistics["formulas_agree"], 1.0);
        prop_assert!(dec.delta.is_zero() || dec.delta.degree() <= 2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn yes_instances_are_satisfiable_under_relabeling(seed in any::<u64>()) {
        let mut rng = RngSeed::new(seed).rng();
        let (inst, sigma) = generate_yes_instance(10, 3, 4, 2, &mut rng).unwrap();
        prop_assert_eq!(inst.satisfied_fraction(&sigma).unwrap(), 1.0);
        prop_assert!(inst.max_preimage_size() <= inst.k as usize);
        let n = inst.num_vertices() as u32;
        let perm: Vec<u32> = (0..n).map(|v| (v * 3 + 1) % n).collect();
        let moved = inst.relabel_vertices(&perm);
        let sigma2 = ptf_hardness::label_cover::Labeling(sigma.0.iter().map(|(&v, &l)| (perm[v as usize], l)).collect());
        prop_assert_eq!(moved.satisfied_fraction(&sigma2).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_respects_scaling_and_negation(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = RngSeed::new(seed).rng();
        let (inst, sigma) = generate_yes_instance(8, 3, 3, 2, &mut rng).unwrap();
        let params = TestParams::new(1, 0.1, 3).unwrap().with_eta(1e-3).with_eps(0.05);
        let (data, _) = emit_instance(&inst, &params, 400, None, RngSeed::new(seed ^ 1), false).unwrap();
        let h = dictator_linear_form(&inst, &sigma).unwrap();
        let acc = h.accuracy(&data).unwrap();
        prop_assert_eq!(h.scale(c).accuracy(&data).unwrap(), acc);
        prop_assume!(h.zero_evaluations(&data) == 0);
        prop_assert!((acc + h.negate().accuracy(&data).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn planted_tensor_concentrates_on_label(seed in any::<u64>()) {
        let mut rng = RngSeed::new(seed).rng();
        let (inst, sigma) = generate_yes_instance(8, 3, 4, 2, &mut rng).unwrap();
        let h = dictator_linear_form(&inst, &sigma).unwrap();
        let t = 10u32;
        // Block j of the restricted witness carries Y_{σ(v_j) j}.
        let v = rng.random_range(0..inst.num_vertices() as u32);
        let label = sigma.get(v).unwrap();
        let bind: HashMap<VarId, Polynomial> = (0..inst.num_vertices() as u32)
            .flat_map(|u| (0..inst.k).map(move |i| (u, i)))
            .map(|(u, i)| {
                let y = if u == v { Polynomial::var(VarId::block(i, 0)) } else { Polynomial::zero() };
                (VarId::point(u, i), y)
            })
            .collect();
        let p = h.poly().substitute(&bind);
        let noise = NoiseSet::empty(inst.k, t);
        let hy = hybrid_rewrite(&p, &noise, 0).unwrap();
        let tensor = coefficient_tensor(&hy, 0);
        let cfg = DecodeConfig::new(0.2, 0, RngSeed::new(0));
        let total = tensor.total_sq().sqrt();
        prop_assert!(total > 0.0);
        prop_assert!(tensor.values[label as usize].abs() >= cfg.nu * total);
    }
}

#[test]
fn discretized_source_is_deterministic() {
    let a: Vec<f64> = {
        let mut r = RngSeed::new(5).rng();
        (0..10).map(|_| GaussianSource::Discretized(16).draw(&mut r)).collect()
    };
    let b: Vec<f64> = {
        let mut r = RngSeed::new(5).rng();
        (0..10).map(|_| GaussianSource::Discretized(16).draw(&mut r)).collect()
    };
    assert_eq!(a, b);
}
