//! Decoding labelings from polynomials: noise sets, the hybrid basis
//! relative to a block `j*`, linear coefficient masses and Γ-sets, and the
//! randomized partial labeling.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gauss::{build_w_transform, center_and_scale, GaussianSource, RngSeed};
use crate::hermite::{hermite_monic, to_hermite, HermiteError, HermiteIndex};
use crate::label_cover::{Labeling, SmoothLabelCoverInstance};
use crate::poly::{Monomial, Polynomial, VarId};
use crate::reduction::TestParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("variable {0} is not a block coordinate of this noise set")]
    ForeignVariable(VarId),
    #[error("block {block} is outside [0, {t})")]
    BlockOutOfRange { block: u32, t: u32 },
    #[error("label {index} is outside [0, {k})")]
    LabelOutOfRange { index: u32, k: u32 },
    #[error("d* = {dstar} must be below d = {d}")]
    InvalidDStar { dstar: u32, d: u32 },
    #[error("ν must be positive, got {0}")]
    InvalidNu(f64),
    #[error("polynomial degree {degree} exceeds d = {d}")]
    DegreeTooHigh { degree: u32, d: u32 },
    #[error(transparent)]
    Hermite(#[from] HermiteError),
}

/// Noisy coordinates `ℐ ⊆ [k]×[T]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSet {
    k: u32,
    t: u32,
    noisy: BTreeSet<(u32, u32)>,
}

impl NoiseSet {
    pub fn empty(k: u32, t: u32) -> Self {
        NoiseSet { k, t, noisy: BTreeSet::new() }
    }

    pub fn new(k: u32, t: u32, pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self, DecodeError> {
        let noisy: BTreeSet<(u32, u32)> = pairs.into_iter().collect();
        for &(i, j) in &noisy {
            if i >= k {
                return Err(DecodeError::LabelOutOfRange { index: i, k });
            }
            if j >= t {
                return Err(DecodeError::BlockOutOfRange { block: j, t });
            }
        }
        Ok(NoiseSet { k, t, noisy })
    }

    /// Each `(i, j)` independently noisy with probability `eps`.
    pub fn sample<R: Rng + ?Sized>(k: u32, t: u32, eps: f64, rng: &mut R) -> Self {
        let p = eps.clamp(0.0, 1.0);
        let noisy = (0..t).flat_map(|j| (0..k).map(move |i| (i, j))).filter(|_| rng.random_bool(p)).collect();
        NoiseSet { k, t, noisy }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn pairs(&self) -> &BTreeSet<(u32, u32)> {
        &self.noisy
    }

    pub fn len(&self) -> usize {
        self.noisy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy.is_empty()
    }

    pub fn contains(&self, i: u32, j: u32) -> bool {
        self.noisy.contains(&(i, j))
    }

    /// Number of non-noisy labels `k_j` in block `j`.
    pub fn k_j(&self, j: u32) -> u32 {
        self.k - self.noisy.iter().filter(|&&(_, b)| b == j).count() as u32
    }

    pub fn non_noisy(&self, j: u32) -> Vec<u32> {
        (0..self.k).filter(|&i| !self.contains(i, j)).collect()
    }

    pub fn noisy_in(&self, j: u32) -> Vec<u32> {
        (0..self.k).filter(|&i| self.contains(i, j)).collect()
    }

    /// Relabeling of block `j` putting noisy labels last: position ↦ label.
    pub fn relabeling(&self, j: u32) -> Vec<u32> {
        let mut order = self.non_noisy(j);
        order.extend(self.noisy_in(j));
        order
    }

    /// The same set with block `j` replaced by the noisy labels `labels`.
    pub fn with_block(&self, j: u32, labels: impl IntoIterator<Item = u32>) -> Self {
        let mut noisy: BTreeSet<(u32, u32)> = self.noisy.iter().copied().filter(|&(_, b)| b != j).collect();
        noisy.extend(labels.into_iter().map(|i| (i, j)));
        NoiseSet { k: self.k, t: self.t, noisy }
    }

    /// Every block keeps at least half of its labels non-noisy.
    pub fn is_structurally_nice(&self) -> bool {
        (0..self.t).all(|j| 2 * (self.k - self.k_j(j)) <= self.k)
    }

    /// Bindings sending non-noisy `Y_{ij}` to W-variables and noisy ones to
    /// `Z_{ij}`, for every block accepted by `blocks`.
    pub fn rewrite_bindings(&self, blocks: impl Fn(u32) -> bool) -> HashMap<VarId, Polynomial> {
        let mut out = HashMap::new();
        for j in (0..self.t).filter(|&j| blocks(j)) {
            let clean = self.non_noisy(j);
            if !clean.is_empty() {
                out.extend(build_w_transform(clean.len()).y_to_w_bindings(&clean, j));
            }
            for i in self.noisy_in(j) {
                out.insert(VarId::block(i, j), Polynomial::var(VarId::z(i, j)));
            }
        }
        out
    }

    /// Inverse of [`rewrite_bindings`](Self::rewrite_bindings).
    pub fn restore_bindings(&self, blocks: impl Fn(u32) -> bool) -> HashMap<VarId, Polynomial> {
        let mut out = HashMap::new();
        for j in (0..self.t).filter(|&j| blocks(j)) {
            let clean = self.non_noisy(j);
            if !clean.is_empty() {
                out.extend(build_w_transform(clean.len()).w_to_y_bindings(&clean, j));
            }
            for i in self.noisy_in(j) {
                out.insert(VarId::z(i, j), Polynomial::var(VarId::block(i, j)));
            }
        }
        out
    }

    /// Z-variables of the noisy coordinates in the accepted blocks.
    pub fn z_vars(&self, blocks: impl Fn(u32) -> bool) -> BTreeSet<VarId> {
        self.noisy.iter().filter(|&&(_, j)| blocks(j)).map(|&(i, j)| VarId::z(i, j)).collect()
    }

    fn check_poly(&self, p: &Polynomial) -> Result<(), DecodeError> {
        for v in p.variables() {
            match v {
                VarId::Block { index, block } => {
                    if block >= self.t {
                        return Err(DecodeError::BlockOutOfRange { block, t: self.t });
                    }
                    if index >= self.k {
                        return Err(DecodeError::LabelOutOfRange { index, k: self.k });
                    }
                }
                other => return Err(DecodeError::ForeignVariable(other)),
            }
        }
        Ok(())
    }
}

/// One draw of the test's block values given the noise set: non-noisy
/// coordinates are `√((T−1)/T)·δ_j + bη`, noisy ones fresh Gaussians.
pub fn sample_block_values<R: Rng>(
    noise: &NoiseSet,
    b: i8,
    eta: f64,
    source: GaussianSource,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let t = noise.t as usize;
    let deltas = center_and_scale((0..t).map(|_| source.draw(rng)).collect());
    let shrink = ((t as f64 - 1.0) / t as f64).sqrt();
    (0..noise.t)
        .map(|j| {
            (0..noise.k)
                .map(|i| {
                    if noise.contains(i, j) {
                        source.draw(rng)
                    } else {
                        shrink * deltas[j as usize] + b as f64 * eta
                    }
                })
                .collect()
        })
        .collect()
}

fn eval_blocks(p: &Polynomial, values: &[Vec<f64>]) -> f64 {
    p.evaluate_with(|v| match v {
        VarId::Block { index, block } => Some(values[block as usize][index as usize]),
        _ => None,
    })
    .expect("polynomial checked to use block variables only")
}

/// Monte Carlo settings for the sign-flip part of niceness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipProbe {
    pub xi: f64,
    pub eta: f64,
    pub samples: usize,
    pub seed: RngSeed,
    pub source: GaussianSource,
}

impl FlipProbe {
    pub fn new(xi: f64, eta: f64, seed: RngSeed) -> Self {
        FlipProbe { xi, eta, samples: 10_000, seed, source: GaussianSource::Exact }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NiceReport {
    pub structural: bool,
    /// Estimated probability that flipping `b` flips the sign of `P`.
    pub flip_probability: Option<f64>,
    /// `None` when no polynomial was supplied.
    pub flip_condition: Option<bool>,
}

impl NiceReport {
    /// Structural condition, and the sign-flip condition when it was checked.
    pub fn is_nice(&self) -> bool {
        self.structural && self.flip_condition.unwrap_or(true)
    }
}

/// Checks both niceness conditions of `ℐ`. The sign-flip probability is
/// estimated with paired draws sharing everything but `b`.
pub fn is_nice(noise: &NoiseSet, probe: Option<(&Polynomial, &FlipProbe)>) -> Result<NiceReport, DecodeError> {
    let structural = noise.is_structurally_nice();
    let Some((p, cfg)) = probe else {
        return Ok(NiceReport { structural, flip_probability: None, flip_condition: None });
    };
    noise.check_poly(p)?;
    let flips = (0..cfg.samples)
        .into_par_iter()
        .filter(|&s| {
            let mut rng = cfg.seed.derive(s as u64).rng();
            let plus = sample_block_values(noise, 1, cfg.eta, cfg.source, &mut rng);
            let shift = 2.0 * cfg.eta;
            let minus: Vec<Vec<f64>> = plus
                .iter()
                .enumerate()
                .map(|(j, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(i, &y)| if noise.contains(i as u32, j as u32) { y } else { y - shift })
                        .collect()
                })
                .collect();
            crate::ptf::sign(eval_blocks(p, &plus)) != crate::ptf::sign(eval_blocks(p, &minus))
        })
        .count();
    let prob = if cfg.samples == 0 { 0.0 } else { flips as f64 / cfg.samples as f64 };
    Ok(NiceReport { structural, flip_probability: Some(prob), flip_condition: Some(prob >= cfg.xi / 2.0) })
}

/// Index of a hybrid basis coefficient: `Y_S` over block `j*`, an
/// orthonormal Hermite element over noisy Z-variables, and a monomial over
/// the block means `W_{0j}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HybridKey {
    pub s: Monomial,
    pub h: HermiteIndex,
    pub m: Monomial,
}

impl HybridKey {
    /// `deg(B) = deg(H) + deg(M)`.
    pub fn basis_degree(&self) -> u32 {
        self.h.degree() + self.m.degree()
    }

    /// The label `i` when `S = {(i, j*)}` is a singleton.
    pub fn singleton(&self) -> Option<u32> {
        match self.s.vars() {
            [(VarId::Block { index, .. }, 1)] => Some(*index),
            _ => None,
        }
    }
}

/// `P = P_omit + Σ c_{S,B}·Y_S·B` relative to block `j*`.
#[derive(Debug, Clone)]
pub struct HybridRepresentation {
    pub jstar: u32,
    pub noise: NoiseSet,
    /// Terms containing some `W_{ij}` with `i ≥ 1`, `j ≠ j*`, in hybrid variables.
    pub omit: Polynomial,
    pub coeffs: BTreeMap<HybridKey, f64>,
}

/// Rewrites `P` over `Y_{ij}` in the hybrid basis relative to `j*`.
pub fn hybrid_rewrite(p: &Polynomial, noise: &NoiseSet, jstar: u32) -> Result<HybridRepresentation, DecodeError> {
    if jstar >= noise.t {
        return Err(DecodeError::BlockOutOfRange { block: jstar, t: noise.t });
    }
    noise.check_poly(p)?;
    let q = p.substitute(&noise.rewrite_bindings(|j| j != jstar));
    let is_omitted = |v: VarId| matches!(v, VarId::W { index, .. } if index > 0);
    let omit = q.filter_terms(|m| m.vars().iter().any(|&(v, _)| is_omitted(v)));
    let rest = q.filter_terms(|m| !m.vars().iter().any(|&(v, _)| is_omitted(v)));
    let exp = to_hermite(&rest, &noise.z_vars(|j| j != jstar))?;
    let mut coeffs = BTreeMap::new();
    for (h, poly) in exp.coeffs() {
        let scale = (h.weight() as f64).sqrt();
        for (mono, &c) in poly.terms() {
            let (s, m) = mono.partition_vars(|v| matches!(v, VarId::Block { .. }));
            coeffs.insert(HybridKey { s, h: h.clone(), m }, c * scale);
        }
    }
    Ok(HybridRepresentation { jstar, noise: noise.clone(), omit, coeffs })
}

impl HybridRepresentation {
    /// The representation as a polynomial over the hybrid variables
    /// (`Y_{·j*}`, `Z`, `W`).
    pub fn to_hybrid_polynomial(&self) -> Result<Polynomial, DecodeError> {
        let mut parts = vec![self.omit.clone()];
        for (key, &c) in &self.coeffs {
            let mut b = Polynomial::term(key.s.mul(&key.m), c / (key.h.weight() as f64).sqrt());
            for &(v, d) in key.h.entries() {
                b = &b * &hermite_monic::<f64>(v, d)?;
            }
            parts.push(b);
        }
        Ok(parts.into_iter().sum())
    }

    /// Back to a polynomial over `Y_{ij}`.
    pub fn reassemble(&self) -> Result<Polynomial, DecodeError> {
        let jstar = self.jstar;
        Ok(self.to_hybrid_polynomial()?.substitute(&self.noise.restore_bindings(|j| j != jstar)))
    }

    /// Coefficient vector `C_i(B) = c_{{(i,j*)},B}` over `B ∈ 𝔅_{−j*d*}`.
    pub fn linear_coefficients(&self, dstar: u32) -> BTreeMap<u32, BTreeMap<(HermiteIndex, Monomial), f64>> {
        let mut out: BTreeMap<u32, BTreeMap<(HermiteIndex, Monomial), f64>> = BTreeMap::new();
        for (key, &c) in &self.coeffs {
            if key.h.degree() != dstar {
                continue;
            }
            if let Some(i) = key.singleton() {
                out.entry(i).or_default().insert((key.h.clone(), key.m.clone()), c);
            }
        }
        out
    }
}

/// Masses `c_{i,j*,d*}` for every label `i` of block `j*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTensor {
    pub jstar: u32,
    pub dstar: u32,
    pub values: Vec<f64>,
}

impl CoefficientTensor {
    pub fn total_sq(&self) -> f64 {
        self.values.iter().map(|c| c * c).sum()
    }
}

/// `c_{i,j*,d*} = √(Σ_{B ∈ 𝔅_{−j*d*}} c²_{{(i,j*)},B})`.
pub fn coefficient_tensor(h: &HybridRepresentation, dstar: u32) -> CoefficientTensor {
    let mut sq = vec![0.0; h.noise.k as usize];
    for (key, &c) in &h.coeffs {
        if key.h.degree() == dstar {
            if let Some(i) = key.singleton() {
                sq[i as usize] += c * c;
            }
        }
    }
    CoefficientTensor { jstar: h.jstar, dstar, values: sq.into_iter().map(f64::sqrt).collect() }
}

/// Noisy mass at most `ε⁴/4` times the non-noisy mass, which is positive.
pub fn is_distinguished(t: &CoefficientTensor, noise: &NoiseSet, eps: f64) -> bool {
    let (mut noisy, mut clean) = (0.0, 0.0);
    for (i, c) in t.values.iter().enumerate() {
        if noise.contains(i as u32, t.jstar) {
            noisy += c * c;
        } else {
            clean += c * c;
        }
    }
    clean > 0.0 && noisy <= eps.powi(4) / 4.0 * clean
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub nu: f64,
    /// Smoothness parameter in the `4^{2R}` factor of Γ₁.
    pub r: u32,
    pub seed: RngSeed,
}

impl DecodeConfig {
    /// `ν = ε²/2`.
    pub fn new(eps: f64, r: u32, seed: RngSeed) -> Self {
        DecodeConfig { nu: eps * eps / 2.0, r, seed }
    }

    /// `ν = ε²/4`, the alternative constant.
    pub fn quarter(eps: f64, r: u32, seed: RngSeed) -> Self {
        DecodeConfig { nu: eps * eps / 4.0, r, seed }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.nu > 0.0 && self.nu.is_finite() {
            Ok(())
        } else {
            Err(DecodeError::InvalidNu(self.nu))
        }
    }

    /// Γ₁ threshold factor `ν²/(100·4^{2R})`.
    pub fn gamma1_factor(&self) -> f64 {
        self.nu * self.nu / (100.0 * 4f64.powi(2 * self.r as i32))
    }
}

/// Whether `ν² ≤ ε²/(2 ln(2/ε))`, the regime the Hoeffding step needs.
pub fn nu_regime_ok(nu: f64, eps: f64) -> bool {
    nu * nu <= eps * eps / (2.0 * (2.0 / eps).ln())
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GammaSets {
    pub gamma0: BTreeSet<u32>,
    pub gamma1: BTreeSet<u32>,
}

/// Labels whose squared mass strictly exceeds `ν²/4` (Γ₀) and
/// `ν²/(100·4^{2R})` (Γ₁) of the total.
pub fn gamma_sets(t: &CoefficientTensor, cfg: &DecodeConfig) -> GammaSets {
    let total = t.total_sq();
    let above = |f: f64| -> BTreeSet<u32> {
        t.values.iter().enumerate().filter(|(_, c)| c.powi(2) > f * total).map(|(i, _)| i as u32).collect()
    };
    GammaSets { gamma0: above(cfg.nu * cfg.nu / 4.0), gamma1: above(cfg.gamma1_factor()) }
}

/// Random choices and per-vertex results of one labeling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub jstar: u32,
    pub dstar: u32,
    /// Vertex chosen for each block; the `j*` entry is `None`.
    pub vertices: Vec<Option<u32>>,
    pub noise: NoiseSet,
    pub tensors: BTreeMap<u32, Vec<f64>>,
    pub gammas: BTreeMap<u32, GammaSets>,
}

/// Bindings `Y^u_i ↦ Σ_{j: v_j = u} Y_{ij}`, unchosen vertices ↦ 0.
pub fn restriction_bindings(n_vertices: usize, k: u32, vertices: &[u32]) -> HashMap<VarId, Polynomial> {
    let mut out = HashMap::new();
    for u in 0..n_vertices as u32 {
        for i in 0..k {
            let form = Polynomial::linear(
                vertices.iter().enumerate().filter(|&(_, &v)| v == u).map(|(j, _)| (VarId::block(i, j as u32), 1.0)),
            );
            out.insert(VarId::point(u, i), form);
        }
    }
    out
}

/// Fixed choices for the per-vertex step: `j*`, `d*`, the other blocks'
/// vertices and `ℐ_{−j*}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelingChoices {
    pub jstar: u32,
    pub dstar: u32,
    pub vertices: Vec<Option<u32>>,
    pub noise: NoiseSet,
}

impl LabelingChoices {
    pub fn draw<R: Rng + ?Sized>(n_vertices: usize, k: u32, t: u32, d: u32, eps: f64, rng: &mut R) -> Self {
        let jstar = rng.random_range(0..t);
        let dstar = rng.random_range(0..d);
        let vertices = (0..t).map(|j| (j != jstar).then(|| rng.random_range(0..n_vertices as u32))).collect();
        let noise = NoiseSet::sample(k, t, eps, rng).with_block(jstar, []);
        LabelingChoices { jstar, dstar, vertices, noise }
    }

    fn with_vertex(&self, v: u32) -> Vec<u32> {
        self.vertices.iter().map(|x| x.unwrap_or(v)).collect()
    }

    /// Hybrid representation of `P_global` restricted with `v_{j*} = v`.
    pub fn hybrid_for(
        &self,
        p_global: &Polynomial,
        inst: &SmoothLabelCoverInstance,
        v: u32,
    ) -> Result<HybridRepresentation, DecodeError> {
        let restricted = p_global.substitute(&restriction_bindings(inst.num_vertices(), inst.k, &self.with_vertex(v)));
        hybrid_rewrite(&restricted, &self.noise, self.jstar)
    }
}

fn check_global(p: &Polynomial, inst: &SmoothLabelCoverInstance, d: u32) -> Result<(), DecodeError> {
    if p.degree() > d {
        return Err(DecodeError::DegreeTooHigh { degree: p.degree(), d });
    }
    for v in p.variables() {
        match v {
            VarId::Point { vertex, index } if (vertex as usize) < inst.num_vertices() && index < inst.k => {}
            other => return Err(DecodeError::ForeignVariable(other)),
        }
    }
    Ok(())
}

/// Γ-sets of every vertex under fixed choices, computed in parallel.
pub fn vertex_gammas(
    p_global: &Polynomial,
    inst: &SmoothLabelCoverInstance,
    choices: &LabelingChoices,
    cfg: &DecodeConfig,
) -> Result<Vec<(CoefficientTensor, GammaSets)>, DecodeError> {
    (0..inst.num_vertices() as u32)
        .into_par_iter()
        .map(|v| {
            let h = choices.hybrid_for(p_global, inst, v)?;
            let t = coefficient_tensor(&h, choices.dstar);
            let g = gamma_sets(&t, cfg);
            Ok((t, g))
        })
        .collect()
}

/// Draws `(j*, d*)`, the other blocks' vertices and `ℐ_{−j*}`, then labels
/// each vertex uniformly from its Γ₀ set, leaving it unlabeled when empty.
pub fn randomized_partial_labeling<R: Rng + ?Sized>(
    p_global: &Polynomial,
    inst: &SmoothLabelCoverInstance,
    params: &TestParams,
    cfg: &DecodeConfig,
    rng: &mut R,
) -> Result<(Labeling, DecodeTrace), DecodeError> {
    cfg.validate()?;
    check_global(p_global, inst, params.d)?;
    let choices =
        LabelingChoices::draw(inst.num_vertices(), inst.k, params.t, params.d, params.effective_eps(), rng);
    let label_seed = RngSeed::new(rng.random());
    let per_vertex = vertex_gammas(p_global, inst, &choices, cfg)?;
    let mut sigma = Labeling::empty();
    let mut tensors = BTreeMap::new();
    let mut gammas = BTreeMap::new();
    for (v, (t, g)) in per_vertex.into_iter().enumerate() {
        let v = v as u32;
        if !g.gamma0.is_empty() {
            let mut r = label_seed.derive(v as u64).rng();
            let pick = r.random_range(0..g.gamma0.len());
            sigma.set(v, *g.gamma0.iter().nth(pick).expect("index in range"));
        }
        tensors.insert(v, t.values);
        gammas.insert(v, g);
    }
    let trace = DecodeTrace {
        jstar: choices.jstar,
        dstar: choices.dstar,
        vertices: choices.vertices,
        noise: choices.noise,
        tensors,
        gammas,
    };
    Ok((sigma, trace))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntersectionViolation {
    pub edge: usize,
    pub u: u32,
    pub w: u32,
}

fn injective_on(pi: &[u32], set: &BTreeSet<u32>) -> bool {
    set.iter().map(|&i| pi[i as usize]).collect::<BTreeSet<_>>().len() == set.len()
}

/// Edges where both endpoints have nonempty Γ₀, both projections are
/// injective on Γ₁, and yet `π_u(Γ₀(u)) ∩ π_w(Γ₀(w)) = ∅`.
pub fn projection_intersection_check(
    inst: &SmoothLabelCoverInstance,
    gammas: &BTreeMap<u32, GammaSets>,
) -> Vec<IntersectionViolation> {
    let empty = GammaSets::default();
    inst.edges
        .iter()
        .enumerate()
        .filter_map(|(idx, e)| {
            let gu = gammas.get(&e.u).unwrap_or(&empty);
            let gw = gammas.get(&e.w).unwrap_or(&empty);
            if gu.gamma0.is_empty() || gw.gamma0.is_empty() {
                return None;
            }
            if !injective_on(&e.pi_u, &gu.gamma1) || !injective_on(&e.pi_w, &gw.gamma1) {
                return None;
            }
            let pu: BTreeSet<u32> = gu.gamma0.iter().map(|&i| e.pi_u[i as usize]).collect();
            let meets = gw.gamma0.iter().any(|&i| pu.contains(&e.pi_w[i as usize]));
            (!meets).then_some(IntersectionViolation { edge: idx, u: e.u, w: e.w })
        })
        .collect()
}

/// Largest `|Σ_{i∈π_u⁻¹(ℓ)} C_{u,i}(B) − Σ_{i∈π_w⁻¹(ℓ)} C_{w,i}(B)|` over
/// edges, projected labels `ℓ` and basis elements `B ∈ 𝔅_{−j*d*}`.
pub fn folding_identity_residual(
    p_global: &Polynomial,
    inst: &SmoothLabelCoverInstance,
    choices: &LabelingChoices,
) -> Result<f64, DecodeError> {
    let reps: Vec<BTreeMap<u32, BTreeMap<(HermiteIndex, Monomial), f64>>> = (0..inst.num_vertices() as u32)
        .into_par_iter()
        .map(|v| Ok(choices.hybrid_for(p_global, inst, v)?.linear_coefficients(choices.dstar)))
        .collect::<Result<_, DecodeError>>()?;
    let mut worst: f64 = 0.0;
    for e in &inst.edges {
        for l in 0..inst.l {
            let mut balance: BTreeMap<&(HermiteIndex, Monomial), f64> = BTreeMap::new();
            for (sign, v, pi) in [(1.0, e.u, &e.pi_u), (-1.0, e.w, &e.pi_w)] {
                for (i, _) in pi.iter().enumerate().filter(|&(_, &x)| x == l) {
                    if let Some(vec) = reps[v as usize].get(&(i as u32)) {
                        for (b, c) in vec {
                            *balance.entry(b).or_default() += sign * c;
                        }
                    }
                }
            }
            worst = balance.values().fold(worst, |a, x| a.max(x.abs()));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_cover::generate_yes_instance;
    use crate::ptf::dictator_linear_form;

    fn y(i: u32, j: u32) -> Polynomial {
        Polynomial::var(VarId::block(i, j))
    }

    #[test]
    fn noise_set_counts() {
        let n = NoiseSet::new(4, 2, [(3, 0), (1, 0)]).unwrap();
        assert_eq!(n.k_j(0), 2);
        assert_eq!(n.k_j(1), 4);
        assert_eq!(n.relabeling(0), vec![0, 2, 1, 3]);
        assert!(n.is_structurally_nice());
        assert!(!NoiseSet::new(2, 1, [(0, 0), (1, 0)]).unwrap().is_structurally_nice());
        assert!(NoiseSet::new(2, 1, [(2, 0)]).is_err());
    }

    #[test]
    fn single_block_variable() {
        let h = hybrid_rewrite(&y(0, 1), &NoiseSet::empty(3, 3), 1).unwrap();
        assert!(h.omit.is_zero());
        assert_eq!(h.coeffs.len(), 1);
        let (key, &c) = h.coeffs.iter().next().unwrap();
        assert_eq!(key.singleton(), Some(0));
        assert_eq!(key.basis_degree(), 0);
        assert_eq!(c, 1.0);
    }

    #[test]
    fn w_supported_term_is_omitted() {
        let noise = NoiseSet::empty(3, 2);
        let w = build_w_transform(3);
        let p = Polynomial::linear((0..3).map(|l| (VarId::block(l, 0), w.rows()[1][l as usize])));
        let h = hybrid_rewrite(&p, &noise, 1).unwrap();
        assert!(h.coeffs.is_empty());
        assert!(h.omit.approx_eq(&Polynomial::var(VarId::w(1, 0)), 1e-12));
    }

    #[test]
    fn noisy_square_expands_in_hermite() {
        let noise = NoiseSet::new(2, 2, [(1, 0)]).unwrap();
        let p = &y(1, 0).pow(2) * &y(0, 1);
        let h = hybrid_rewrite(&p, &noise, 1).unwrap();
        let t2 = coefficient_tensor(&h, 2);
        let t0 = coefficient_tensor(&h, 0);
        assert!((t2.values[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!((t0.values[0] - 1.0).abs() < 1e-12);
        assert!(h.reassemble().unwrap().approx_eq(&p, 1e-12));
    }

    #[test]
    fn gamma_strictness_and_spike() {
        let cfg = DecodeConfig::new(0.1, 1, RngSeed::new(0)).with_nu(1.0);
        let flat = CoefficientTensor { jstar: 0, dstar: 0, values: vec![1.0; 4] };
        assert!(gamma_sets(&flat, &cfg).gamma0.is_empty());
        let spike = CoefficientTensor { jstar: 0, dstar: 0, values: vec![0.0, 3.0, 0.0, 0.0] };
        assert_eq!(gamma_sets(&spike, &cfg).gamma0, BTreeSet::from([1]));
    }

    #[test]
    fn distinguished_cases() {
        let noise = NoiseSet::new(3, 1, [(2, 0)]).unwrap();
        let mk = |v: Vec<f64>| CoefficientTensor { jstar: 0, dstar: 0, values: v };
        assert!(is_distinguished(&mk(vec![1.0, 0.0, 0.0]), &noise, 0.1));
        assert!(!is_distinguished(&mk(vec![0.0, 0.0, 1.0]), &noise, 0.1));
        assert!(!is_distinguished(&mk(vec![0.0; 3]), &noise, 0.1));
    }

    #[test]
    fn planted_dictator_decodes() {
        let mut rng = RngSeed::new(11).rng();
        let (inst, sigma) = generate_yes_instance(12, 3, 4, 2, &mut rng).unwrap();
        let lstar = dictator_linear_form(&inst, &sigma).unwrap().poly().clone();
        let params = TestParams::new(1, 0.1, 4).unwrap();
        let cfg = DecodeConfig::new(params.effective_eps(), 1, RngSeed::new(3));
        let (a, ta) = randomized_partial_labeling(&lstar, &inst, &params, &cfg, &mut RngSeed::new(5).rng()).unwrap();
        let (b, _) = randomized_partial_labeling(&lstar, &inst, &params, &cfg, &mut RngSeed::new(5).rng()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, sigma);
        assert!(projection_intersection_check(&inst, &ta.gammas).is_empty());
        let zero = randomized_partial_labeling(&Polynomial::zero(), &inst, &params, &cfg, &mut rng).unwrap().0;
        assert!(zero.is_empty());
    }
}
