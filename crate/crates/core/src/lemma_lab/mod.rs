//! Verification oracles for the polynomial identities and inequalities the
//! hardness analysis rests on. Symbolic checks run over exact rationals;
//! distributional ones by seeded Monte Carlo.

mod corpus;
mod norms;
mod probes;
mod structural;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gauss::RngSeed;

pub use corpus::{monomials_up_to, random_rational, random_rational_poly, w_vars, xyz};
pub use norms::{
    coeff_bounds_suite, mon_submult_suite, q_decomposition_suite, verify_coeff_bounds, verify_mon_submult,
    verify_q_decomposition, CoeffBoundsConfig, QDecomposition,
};
pub use probes::{
    carbery_wright_suite, chernoff_decoding_probe, chernoff_suite, empirical_carbery_wright, CarberyWrightConfig,
};
pub use structural::{
    claim_chain_probe, lower_bound_suite, ChainProbe, perturbed_removal_instance, robust_polynomial_suite,
    structured_removal_instance, variable_removal_suite, verify_lower_bound, verify_robust_polynomial,
    verify_variable_removal, RemovalDecomposition, VariableRemovalInstance,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LemmaError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unknown lemma `{0}`")]
    UnknownLemma(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

/// Reproduction data for a trial: its seed and the serialized inputs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<RngSeed>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub params: serde_json::Value,
    pub verdict: Verdict,
    pub trials: usize,
    pub violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub statistics: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl LemmaReport {
    pub fn new(lemma: &str, params: serde_json::Value) -> Self {
        LemmaReport {
            lemma: lemma.to_string(),
            params,
            verdict: Verdict::Holds,
            trials: 1,
            violations: 0,
            witness: None,
            statistics: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn stat(mut self, key: &str, value: f64) -> Self {
        self.statistics.insert(key.to_string(), value);
        self
    }

    pub fn tolerance(mut self, key: &str, value: f64) -> Self {
        self.tolerances.insert(key.to_string(), value);
        self
    }

    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    /// Sets the verdict; a violation records `inputs` as the witness.
    pub fn conclude(mut self, holds: bool, inputs: impl FnOnce() -> BTreeMap<String, String>) -> Self {
        if holds {
            self.verdict = Verdict::Holds;
        } else {
            self.verdict = Verdict::Violated;
            self.violations = 1;
            self.witness = Some(Witness { seed: None, trial: None, inputs: inputs() });
        }
        self
    }

    pub fn inconclusive(mut self) -> Self {
        self.verdict = Verdict::Inconclusive;
        self
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// Runs `trial` on `trials` independent streams `seed.derive(t)` in
/// parallel and merges the reports in trial order. Statistics become
/// `min_*`/`max_*` over trials; the witness is the first violating trial.
pub fn run_corpus<F>(lemma: &str, params: serde_json::Value, trials: usize, seed: RngSeed, trial: F) -> LemmaReport
where
    F: Fn(&mut ChaCha20Rng) -> LemmaReport + Sync,
{
    let reports: Vec<LemmaReport> =
        (0..trials).into_par_iter().map(|t| trial(&mut seed.derive(t as u64).rng())).collect();
    let mut out = LemmaReport::new(lemma, params);
    out.trials = trials;
    out.violations = reports.iter().filter(|r| r.verdict == Verdict::Violated).count();
    let inconclusive = reports.iter().filter(|r| r.verdict == Verdict::Inconclusive).count();
    out.verdict = if out.violations > 0 {
        Verdict::Violated
    } else if trials > 0 && inconclusive == trials {
        Verdict::Inconclusive
    } else {
        Verdict::Holds
    };
    out.statistics.insert("inconclusive_trials".into(), inconclusive as f64);
    for (t, r) in reports.iter().enumerate() {
        if out.witness.is_none() && r.verdict == Verdict::Violated {
            let inputs = r.witness.as_ref().map(|w| w.inputs.clone()).unwrap_or_default();
            out.witness = Some(Witness { seed: Some(seed.derive(t as u64)), trial: Some(t), inputs });
        }
        for (k, &v) in &r.statistics {
            let lo = out.statistics.entry(format!("min_{k}")).or_insert(f64::INFINITY);
            *lo = lo.min(v);
            let hi = out.statistics.entry(format!("max_{k}")).or_insert(f64::NEG_INFINITY);
            *hi = hi.max(v);
        }
        for (k, &v) in &r.tolerances {
            out.tolerances.entry(k.clone()).or_insert(v);
        }
    }
    out
}

/// Lemma identifiers accepted by [`run_lemma`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LemmaId {
    RobustPoly,
    VarRemoval,
    LowerBound,
    CoeffBounds,
    MonSubmult,
    QDecomp,
    CarberyWright,
    ChernoffProbe,
}

impl LemmaId {
    pub const ALL: [LemmaId; 8] = [
        LemmaId::RobustPoly,
        LemmaId::VarRemoval,
        LemmaId::LowerBound,
        LemmaId::CoeffBounds,
        LemmaId::MonSubmult,
        LemmaId::QDecomp,
        LemmaId::CarberyWright,
        LemmaId::ChernoffProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LemmaId::RobustPoly => "robust-poly",
            LemmaId::VarRemoval => "var-removal",
            LemmaId::LowerBound => "lower-bound",
            LemmaId::CoeffBounds => "coeff-bounds",
            LemmaId::MonSubmult => "mon-submult",
            LemmaId::QDecomp => "q-decomp",
            LemmaId::CarberyWright => "carbery-wright",
            LemmaId::ChernoffProbe => "chernoff-probe",
        }
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LemmaId {
    type Err = LemmaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LemmaId::ALL.into_iter().find(|l| l.name() == s).ok_or_else(|| LemmaError::UnknownLemma(s.to_string()))
    }
}

/// Runs the default randomized corpus of a lemma.
pub fn run_lemma(id: LemmaId, trials: usize, seed: RngSeed) -> LemmaReport {
    match id {
        LemmaId::RobustPoly => robust_polynomial_suite(2, 5, trials, seed),
        LemmaId::VarRemoval => {
            let parts: Vec<LemmaReport> = (1..=3u32).map(|a| variable_removal_suite(a as i64, 3, trials, seed.derive(a as u64))).collect();
            merge_reports("var-removal", serde_json::json!({ "a": [1, 2, 3], "d": 3, "trials_per_a": trials }), parts)
        }
        LemmaId::LowerBound => lower_bound_suite(2, 3, trials, seed),
        LemmaId::CoeffBounds => coeff_bounds_suite(2, 20, trials, &CoeffBoundsConfig::default(), seed),
        LemmaId::MonSubmult => mon_submult_suite(4, 2, trials, seed),
        LemmaId::QDecomp => q_decomposition_suite(6, 10, 2, trials, seed),
        LemmaId::CarberyWright => {
            let cfg = CarberyWrightConfig { samples: trials.max(10_000), ..CarberyWrightConfig::default() };
            carbery_wright_suite(&cfg, seed)
        },
        LemmaId::ChernoffProbe => chernoff_suite(trials.max(1000), seed),
    }
}

/// Concatenates several suite reports under one name.
pub fn merge_reports(lemma: &str, params: serde_json::Value, parts: Vec<LemmaReport>) -> LemmaReport {
    let mut out = LemmaReport::new(lemma, params);
    out.trials = parts.iter().map(|p| p.trials).sum();
    out.violations = parts.iter().map(|p| p.violations).sum();
    out.verdict = if parts.iter().any(|p| p.verdict == Verdict::Violated) {
        Verdict::Violated
    } else if parts.iter().all(|p| p.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Holds
    };
    out.witness = parts.iter().find_map(|p| p.witness.clone());
    for (idx, p) in parts.into_iter().enumerate() {
        for (k, v) in p.statistics {
            out.statistics.insert(format!("part{idx}.{k}"), v);
        }
        out.tolerances.extend(p.tolerances);
        out.notes.extend(p.notes);
    }
    out
}
