//! Polynomial threshold functions over dataset coordinates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::label_cover::{Labeling, SmoothLabelCoverInstance};
use crate::poly::{Monomial, Polynomial, VarId};
use crate::gauss::{QuantileCoupling, RngSeed};
use crate::reduction::{sample_coupled_pair, CoordinateSpace, Dataset, TestDistribution};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PtfError {
    #[error("labeling leaves vertex {0} unlabeled")]
    PartialLabeling(u32),
    #[error("label {label} of vertex {vertex} is outside [0, {k})")]
    LabelOutOfRange { vertex: u32, label: u32, k: u32 },
    #[error("variable {0} is not a coordinate of the hypothesis space")]
    ForeignVariable(VarId),
    #[error("hypothesis space has dimension {expected}, data has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polynomial degree {degree} exceeds the declared degree {declared}")]
    DegreeTooHigh { degree: u32, declared: u32 },
    #[error("{points} points cannot determine {features} coefficients")]
    TooFewPoints { points: usize, features: usize },
}

/// `x ↦ sign(P(x))` with the convention `sign(0) = +1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PTFHypothesis {
    poly: Polynomial,
    degree: u32,
    space: CoordinateSpace,
    compiled: Vec<(f64, Vec<(usize, i32)>)>,
}

pub fn sign(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

impl PTFHypothesis {
    pub fn new(poly: Polynomial, degree: u32, space: CoordinateSpace) -> Result<Self, PtfError> {
        if poly.degree() > degree {
            return Err(PtfError::DegreeTooHigh { degree: poly.degree(), declared: degree });
        }
        let mut compiled = Vec::with_capacity(poly.len());
        for (m, &c) in poly.terms() {
            let mut factors = Vec::with_capacity(m.vars().len());
            for &(v, e) in m.vars() {
                let idx = space.index_of(v).ok_or(PtfError::ForeignVariable(v))?;
                factors.push((idx, e as i32));
            }
            compiled.push((c, factors));
        }
        Ok(PTFHypothesis { poly, degree, space, compiled })
    }

    pub fn poly(&self) -> &Polynomial {
        &self.poly
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn space(&self) -> CoordinateSpace {
        self.space
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.compiled
            .iter()
            .map(|(c, f)| c * f.iter().map(|&(i, e)| x[i].powi(e)).product::<f64>())
            .sum()
    }

    pub fn classify(&self, x: &[f64]) -> i8 {
        sign(self.evaluate(x))
    }

    pub fn negate(&self) -> Self {
        Self::new(-&self.poly, self.degree, self.space).expect("same support")
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.poly.scale(&c), self.degree, self.space).expect("same support")
    }

    /// Fraction of points whose sign matches the classifier.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64, PtfError> {
        if data.dim() != self.space.dim() {
            return Err(PtfError::DimensionMismatch { expected: self.space.dim(), got: data.dim() });
        }
        if data.is_empty() {
            return Ok(0.0);
        }
        let good = data.rows().filter(|(x, s)| self.classify(x) == *s).count();
        Ok(good as f64 / data.len() as f64)
    }

    /// Number of points where the polynomial evaluates to exactly zero.
    pub fn zero_evaluations(&self, data: &Dataset) -> usize {
        data.rows().filter(|(x, _)| self.evaluate(x) == 0.0).count()
    }
}

/// Fraction of coupled Gaussian/`ℋ_N` draws of the basic test on which `h`
/// gives the same sign, with its standard error. Draw `i` uses
/// `seed.derive(i)`.
pub fn discretization_agreement(
    h: &PTFHypothesis,
    inst: &SmoothLabelCoverInstance,
    dist: &TestDistribution,
    n: u32,
    points: usize,
    seed: RngSeed,
) -> Result<(f64, f64), PtfError> {
    let dim = inst.num_vertices() * inst.k as usize;
    if h.space.dim() != dim {
        return Err(PtfError::DimensionMismatch { expected: h.space.dim(), got: dim });
    }
    let coupling = QuantileCoupling::new(n);
    let same = (0..points)
        .into_par_iter()
        .filter(|&i| {
            let (a, b) = sample_coupled_pair(inst, dist, &coupling, &mut seed.derive(i as u64).rng());
            h.classify(&a.coords) == h.classify(&b.coords)
        })
        .count();
    let p = same as f64 / points.max(1) as f64;
    Ok((p, (p * (1.0 - p) / points.max(1) as f64).sqrt()))
}

/// `L* = Σ_v Y^v_{σ(v)}` over the raw coordinates.
pub fn dictator_linear_form(inst: &SmoothLabelCoverInstance, sigma: &Labeling) -> Result<PTFHypothesis, PtfError> {
    let mut terms = Vec::with_capacity(inst.num_vertices());
    for v in 0..inst.num_vertices() as u32 {
        let label = sigma.get(v).ok_or(PtfError::PartialLabeling(v))?;
        if label >= inst.k {
            return Err(PtfError::LabelOutOfRange { vertex: v, label, k: inst.k });
        }
        terms.push((VarId::point(v, label), 1.0));
    }
    let space = CoordinateSpace::Raw { vertices: inst.num_vertices() as u32, k: inst.k };
    PTFHypothesis::new(Polynomial::linear(terms), 1, space)
}

/// All monomials of degree ≤ `d` over `n` coordinates, constant first.
fn feature_monomials(n: usize, d: u32) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..d {
        let mut next = Vec::new();
        for m in &frontier {
            let start = m.last().copied().unwrap_or(0);
            for i in start..n {
                let mut m2 = m.clone();
                m2.push(i);
                next.push(m2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeSummary {
    pub features: usize,
    pub rank: usize,
    pub rank_deficient: bool,
    pub train_accuracy: f64,
}

/// Least-squares fit of a degree-`d` polynomial to the signs, used as a
/// threshold function. Diagnostic only. Rank deficiency is reported in the
/// summary and resolved with the pseudo-inverse.
pub fn fit_probe(data: &Dataset, d: u32) -> Result<(PTFHypothesis, ProbeSummary), PtfError> {
    let feats = feature_monomials(data.dim(), d);
    let p = feats.len();
    if data.len() < p {
        return Err(PtfError::TooFewPoints { points: data.len(), features: p });
    }
    let row = |x: &[f64]| -> Vec<f64> { feats.iter().map(|m| m.iter().map(|&i| x[i]).product()).collect() };
    let (gram, rhs) = data
        .rows()
        .fold(
            || (vec![0.0; p * p], vec![0.0; p]),
            |(mut g, mut r), (x, s)| {
                let phi = row(x);
                for a in 0..p {
                    r[a] += phi[a] * s as f64;
                    for b in a..p {
                        g[a * p + b] += phi[a] * phi[b];
                    }
                }
                (g, r)
            },
        )
        .reduce(
            || (vec![0.0; p * p], vec![0.0; p]),
            |(mut g, mut r), (g2, r2)| {
                g.iter_mut().zip(g2).for_each(|(a, b)| *a += b);
                r.iter_mut().zip(r2).for_each(|(a, b)| *a += b);
                (g, r)
            },
        );
    let g = DMatrix::from_fn(p, p, |a, b| gram[a.min(b) * p + a.max(b)]);
    let svd = g.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-12 * smax.max(f64::MIN_POSITIVE);
    let rank = svd.rank(tol);
    let coef = svd.solve(&DVector::from_vec(rhs), tol).expect("both factors computed");
    let poly = Polynomial::from_terms(feats.iter().zip(coef.iter()).map(|(m, &c)| {
        (Monomial::from_pairs(m.iter().map(|&i| (data.space.var_of(i), 1))), c)
    }));
    let h = PTFHypothesis::new(poly, d, data.space)?;
    let train_accuracy = h.accuracy(data)?;
    Ok((h, ProbeSummary { features: p, rank, rank_deficient: rank < p, train_accuracy }))
}
