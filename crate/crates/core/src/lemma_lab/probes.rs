//! Monte Carlo probes of the anti-concentration and concentration facts
//! used by the decoder.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{merge_reports, LemmaError, LemmaReport};
use crate::decode::nu_regime_ok;
use crate::gauss::{standard_normal, RngSeed};
use crate::hermite::to_hermite;
use crate::poly::{Polynomial, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarberyWrightConfig {
    pub eps_cw: f64,
    pub samples: usize,
}

impl Default for CarberyWrightConfig {
    fn default() -> Self {
        CarberyWrightConfig { eps_cw: 0.1, samples: 10_000 }
    }
}

const CHUNK: usize = 1024;

/// Counts the indices `s < n` where `hit` fires on stream `seed.derive(s / CHUNK)`.
fn count_hits(n: usize, seed: RngSeed, hit: impl Fn(&mut rand_chacha::ChaCha20Rng) -> bool + Sync) -> usize {
    (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.derive(c as u64).rng();
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).filter(|_| hit(&mut rng)).count()
        })
        .sum()
}

/// Estimates `Pr[|P| ≤ ε‖P‖₂]` over i.i.d. standard Gaussian inputs and
/// reports it against `d·ε^{1/d}`. The implied constant is unknown, so the
/// verdict is always inconclusive.
pub fn empirical_carbery_wright(p: &Polynomial, cfg: &CarberyWrightConfig, seed: RngSeed) -> Result<LemmaReport, LemmaError> {
    let vars: Vec<VarId> = p.variables().into_iter().collect();
    let norm = to_hermite(p, &vars.iter().copied().collect())
        .map_err(|e| LemmaError::Precondition(e.to_string()))?
        .l2_norm()
        .map_err(|e| LemmaError::Precondition(e.to_string()))?;
    if norm <= 0.0 {
        return Err(LemmaError::Precondition("‖P‖₂ must be positive".into()));
    }
    let threshold = cfg.eps_cw * norm;
    let hits = count_hits(cfg.samples, seed, |rng| {
        let point: BTreeMap<VarId, f64> = vars.iter().map(|&v| (v, standard_normal(rng))).collect();
        p.evaluate_with(|v| point.get(&v).copied()).expect("all bound").abs() <= threshold
    });
    let prob = hits as f64 / cfg.samples as f64;
    let d = p.degree().max(1) as f64;
    let reference = d * cfg.eps_cw.powf(1.0 / d);
    Ok(LemmaReport::new("carbery-wright", json!({ "P": p.to_text(), "eps_cw": cfg.eps_cw, "samples": cfg.samples }))
        .stat("probability", prob)
        .stat("std_error", (prob * (1.0 - prob) / cfg.samples as f64).sqrt())
        .stat("reference", reference)
        .stat("ratio", prob / reference)
        .note("constant in the small-ball bound is unspecified; ratio reported only")
        .inconclusive())
}

pub fn carbery_wright_suite(cfg: &CarberyWrightConfig, seed: RngSeed) -> LemmaReport {
    let x = Polynomial::var(VarId::abstract_var('x', 0));
    let y = Polynomial::var(VarId::abstract_var('x', 1));
    let one = Polynomial::one();
    let cases = [
        x.clone(),
        one.clone(),
        &x.pow(2) - &one,
        &x * &y,
        &x.pow(3) - &x.scale(&3.0),
        &(&x.pow(2) - &one) + &(&y.pow(2) - &one),
    ];
    let parts = cases
        .iter()
        .enumerate()
        .map(|(i, p)| empirical_carbery_wright(p, cfg, seed.derive(i as u64)).expect("nonzero cases"))
        .collect();
    merge_reports("carbery-wright", json!({ "eps_cw": cfg.eps_cw, "samples": cfg.samples }), parts)
}

/// Draws `ℐ_{j*}` with each index noisy independently with probability `ε`
/// and estimates `Pr[Σ_{i∈ℐ} c_i² ≤ (ε/2)Σc_i²]`. Holds when the estimate
/// stays below the Hoeffding envelope `2exp(−ε²(Σc²)²/(2Σc⁴))` plus three
/// standard errors. Tensors with every share `c_i²/Σc² < ν²` are flagged flat;
/// for them the envelope is at most `2exp(−ε²/(2ν²))`.
pub fn chernoff_decoding_probe(values: &[f64], eps: f64, nu: f64, trials: usize, seed: RngSeed) -> LemmaReport {
    let params = json!({ "k": values.len(), "eps": eps, "nu": nu, "trials": trials });
    let mut report = LemmaReport::new("chernoff-probe", params);
    report.trials = trials;
    if !nu_regime_ok(nu, eps) {
        report = report.note(format!("ν = {nu} is outside ν² ≤ ε²/(2 ln(2/ε))"));
    }
    let total: f64 = values.iter().map(|c| c * c).sum();
    if total <= 0.0 {
        return report.note("zero tensor: noisy-mass event is degenerate").inconclusive();
    }
    let quartic: f64 = values.iter().map(|c| c.powi(4)).sum();
    let max_share = values.iter().map(|c| c * c / total).fold(0.0, f64::max);
    let flat = max_share < nu * nu;
    let envelope = (2.0 * (-eps * eps * total * total / (2.0 * quartic)).exp()).min(1.0);
    let hits = count_hits(trials, seed, |rng| {
        let noisy: f64 = values.iter().filter(|_| rng.random_bool(eps)).map(|c| c * c).sum();
        noisy <= eps / 2.0 * total
    });
    let prob = hits as f64 / trials as f64;
    let slack = 3.0 * (envelope * (1.0 - envelope) / trials as f64).sqrt();
    report = report
        .stat("probability", prob)
        .stat("envelope", envelope)
        .stat("max_share", max_share)
        .stat("flat", if flat { 1.0 } else { 0.0 })
        .tolerance("mc_slack", slack);
    if flat {
        report = report.stat("flat_bound", 2.0 * (-eps * eps / (2.0 * nu * nu)).exp());
    }
    report.conclude(prob <= envelope + slack, || {
        BTreeMap::from([("values".into(), serde_json::to_string(values).expect("serializable"))])
    })
}

/// Flat, single-spike and geometrically decaying tensors at `ε = 0.2`,
/// `ν = ε²/2`.
pub fn chernoff_suite(trials: usize, seed: RngSeed) -> LemmaReport {
    let (eps, k) = (0.2, 200);
    let nu = eps * eps / 2.0;
    let mut spike = vec![0.0; k];
    spike[0] = 1.0;
    let tensors = [vec![1.0; k], spike, (0..k).map(|i| 0.97f64.powi(i as i32)).collect()];
    let parts = tensors
        .iter()
        .enumerate()
        .map(|(i, v)| chernoff_decoding_probe(v, eps, nu, trials, seed.derive(i as u64)))
        .collect();
    merge_reports("chernoff-probe", json!({ "eps": eps, "nu": nu, "k": k, "trials": trials }), parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `erf` by its Maclaurin series, accurate for small arguments.
    fn erf(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..40 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }

    #[test]
    fn linear_small_ball_matches_gaussian_cdf() {
        let exact = erf(0.1 / 2f64.sqrt());
        assert!((exact - 0.0797).abs() < 1e-4);
        let cfg = CarberyWrightConfig { eps_cw: 0.1, samples: 200_000 };
        let r = empirical_carbery_wright(&Polynomial::var(VarId::abstract_var('x', 0)), &cfg, RngSeed::new(3)).unwrap();
        let se = (exact * (1.0 - exact) / cfg.samples as f64).sqrt();
        assert!((r.statistics["probability"] - exact).abs() < 4.0 * se);
        assert_eq!(r.verdict, super::super::Verdict::Inconclusive);
    }

    #[test]
    fn constant_never_small() {
        let r = empirical_carbery_wright(&Polynomial::one(), &CarberyWrightConfig::default(), RngSeed::new(1)).unwrap();
        assert_eq!(r.statistics["probability"], 0.0);
        assert!(empirical_carbery_wright(&Polynomial::zero(), &CarberyWrightConfig::default(), RngSeed::new(1)).is_err());
    }

    #[test]
    fn spike_and_flat_tensors() {
        let mut spike = vec![0.0; 50];
        spike[7] = 1.0;
        let r = chernoff_decoding_probe(&spike, 0.2, 0.02, 20_000, RngSeed::new(4));
        assert!((r.statistics["probability"] - 0.8).abs() < 0.02);
        assert_eq!(r.statistics["flat"], 0.0);
        assert!(r.holds());
        let flat = chernoff_decoding_probe(&[1.0; 200], 0.2, 0.02, 20_000, RngSeed::new(5));
        assert!(flat.holds());
        assert!((flat.statistics["envelope"] - 2.0 * (-4.0f64).exp()).abs() < 1e-12);
        let zero = chernoff_decoding_probe(&[0.0; 10], 0.2, 0.02, 100, RngSeed::new(6));
        assert_eq!(zero.verdict, super::super::Verdict::Inconclusive);
    }
}
