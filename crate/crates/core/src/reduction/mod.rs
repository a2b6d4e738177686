//! The point-sign test sampler, folding, and dataset emission.

mod dataset;
mod folding;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gauss::{center_and_scale, open_uniform, GaussianSource, QuantileCoupling};
use crate::label_cover::SmoothLabelCoverInstance;
use crate::poly::VarId;

pub use dataset::{emit_instance, read_dataset, write_csv, write_dataset, Dataset, DatasetManifest, DATASET_MAGIC, DATASET_VERSION};
pub use folding::{
    build_folding_basis, check_valid_constraint, check_valid_constraint_hermite, folding_violations, ConstraintViolation,
    FoldingBasis,
};

#[derive(Debug, thiserror::Error)]
pub enum ReductionError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("at least one point is required")]
    NoPoints,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Test parameters derived from the PTF degree `d`, the gap `ξ` and label count `k`.
///
/// The honest shift `η` underflows doubles for every `d ≥ 1`, so it is kept
/// as `log_eta`; `eta_override` supplies the value actually used for sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestParams {
    pub d: u32,
    pub xi: f64,
    pub k: u32,
    /// `T = 10d`.
    pub t: u32,
    /// `ε = ξ/(32Td)`.
    pub eps: f64,
    /// `ln η` with `η = (εξ/(20kdT))^{d·6^{3d}}`.
    pub log_eta: f64,
    /// `ln ρ` with `ρ = (20dkT³/ε⁴)^{−6^d}·(kT)^{−1}`.
    pub log_rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_override: Option<f64>,
    /// Replace every Gaussian draw by a normalized sum of `N` random signs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discretize: Option<u32>,
}

impl TestParams {
    pub fn new(d: u32, xi: f64, k: u32) -> Result<Self, ReductionError> {
        if d == 0 {
            return Err(ReductionError::InvalidParams("degree d must be positive".into()));
        }
        if !(xi > 0.0 && xi < 1.0) {
            return Err(ReductionError::InvalidParams("ξ must lie in (0, 1)".into()));
        }
        if k == 0 {
            return Err(ReductionError::InvalidParams("k must be positive".into()));
        }
        let (df, kf) = (d as f64, k as f64);
        let t = 10 * d;
        let tf = t as f64;
        let eps = xi / (32.0 * tf * df);
        let log_eta = df * 6f64.powi(3 * d as i32) * (eps * xi / (20.0 * kf * df * tf)).ln();
        let log_rho = -6f64.powi(d as i32) * (20.0 * df * kf * tf.powi(3) / eps.powi(4)).ln() - (kf * tf).ln();
        Ok(TestParams { d, xi, k, t, eps, log_eta, log_rho, eta_override: None, eps_override: None, discretize: None })
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta_override = Some(eta);
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps_override = Some(eps);
        self
    }

    pub fn with_discretization(mut self, n: Option<u32>) -> Self {
        self.discretize = n;
        self
    }

    /// `η` used for sampling: the override, else `exp(log_eta)` (usually 0.0).
    pub fn eta(&self) -> f64 {
        self.eta_override.unwrap_or_else(|| self.log_eta.exp())
    }

    pub fn effective_eps(&self) -> f64 {
        self.eps_override.unwrap_or(self.eps)
    }

    pub fn distribution(&self) -> TestDistribution {
        TestDistribution {
            t: self.t as usize,
            eps: self.effective_eps(),
            eta: self.eta(),
            source: match self.discretize {
                Some(n) => GaussianSource::Discretized(n),
                None => GaussianSource::Exact,
            },
        }
    }
}

/// The concrete sampling parameters of the basic test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestDistribution {
    pub t: usize,
    pub eps: f64,
    pub eta: f64,
    pub source: GaussianSource,
}

/// How a point was drawn: chosen vertices, noise set, sign and per-block values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub vertices: Vec<u32>,
    /// Noisy `(i, j)` pairs, sorted.
    pub noise: Vec<(u32, u32)>,
    pub b: i8,
    /// `block_values[j][i] = Y_{ij}`.
    pub block_values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSignPair {
    pub coords: Vec<f64>,
    pub sign: i8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Index of `Y^v_i` in the dense raw coordinate vector.
pub fn raw_index(k: u32, vertex: u32, label: u32) -> usize {
    (vertex * k + label) as usize
}

/// Coordinates a dataset lives in: raw `V×[k]`, or a fixed basis of the folded subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordinateSpace {
    Raw { vertices: u32, k: u32 },
    Folded { dim: u32 },
}

impl CoordinateSpace {
    pub fn dim(&self) -> usize {
        match *self {
            CoordinateSpace::Raw { vertices, k } => (vertices * k) as usize,
            CoordinateSpace::Folded { dim } => dim as usize,
        }
    }

    /// Position of a variable, if it names a coordinate of this space.
    /// Folded coordinates are the abstract variables `f0, f1, ...`.
    pub fn index_of(&self, v: VarId) -> Option<usize> {
        match (*self, v) {
            (CoordinateSpace::Raw { vertices, k }, VarId::Point { vertex, index }) if vertex < vertices && index < k => {
                Some(raw_index(k, vertex, index))
            }
            (CoordinateSpace::Folded { dim }, VarId::Abstract { name: 'f', index }) if index < dim => Some(index as usize),
            _ => None,
        }
    }

    pub fn var_of(&self, idx: usize) -> VarId {
        match *self {
            CoordinateSpace::Raw { k, .. } => VarId::point(idx as u32 / k, idx as u32 % k),
            CoordinateSpace::Folded { .. } => VarId::abstract_var('f', idx as u32),
        }
    }
}

/// Draws the block values of one test instance: `(vertices, noise, b, Y)`.
fn sample_blocks<R: Rng>(n_vertices: u32, k: u32, dist: &TestDistribution, rng: &mut R) -> Provenance {
    let source = dist.source;
    sample_blocks_with(n_vertices, k, dist, rng, |r| source.draw(r))
}

fn sample_blocks_with<R: Rng>(
    n_vertices: u32,
    k: u32,
    dist: &TestDistribution,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> f64,
) -> Provenance {
    let t = dist.t;
    let vertices: Vec<u32> = (0..t).map(|_| rng.random_range(0..n_vertices)).collect();
    let g: Vec<f64> = (0..t).map(|_| draw(rng)).collect();
    let deltas = center_and_scale(g);
    let b: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
    let shrink = ((t as f64 - 1.0) / t as f64).sqrt();
    let mut noise = Vec::new();
    let mut block_values = vec![vec![0.0; k as usize]; t];
    for (j, row) in block_values.iter_mut().enumerate() {
        for (i, y) in row.iter_mut().enumerate() {
            if dist.eps > 0.0 && rng.random_bool(dist.eps.min(1.0)) {
                noise.push((i as u32, j as u32));
                *y = f64::NAN;
            } else {
                *y = shrink * deltas[j] + b as f64 * dist.eta;
            }
        }
    }
    // Noisy coordinates are drawn after the noise set is fixed.
    for &(i, j) in &noise {
        block_values[j as usize][i as usize] = draw(rng);
    }
    Provenance { vertices, noise, b, block_values }
}

/// One draw of the basic test over the raw coordinates `V×[k]`.
///
/// A vertex chosen for several blocks receives the sum of those blocks'
/// values, so `y = Σ_j embed_{v_j}(Y_{·j})`; unchosen vertices stay 0.
pub fn sample_basic_test<R: Rng>(
    inst: &SmoothLabelCoverInstance,
    dist: &TestDistribution,
    rng: &mut R,
) -> PointSignPair {
    embed(inst, sample_blocks(inst.num_vertices() as u32, inst.k, dist, rng))
}

fn embed(inst: &SmoothLabelCoverInstance, prov: Provenance) -> PointSignPair {
    let k = inst.k;
    let mut coords = vec![0.0; inst.num_vertices() * k as usize];
    for (j, &v) in prov.vertices.iter().enumerate() {
        for (i, y) in prov.block_values[j].iter().enumerate() {
            coords[raw_index(k, v, i as u32)] += y;
        }
    }
    PointSignPair { coords, sign: prov.b, provenance: Some(prov) }
}

/// A Gaussian draw of the basic test and its `ℋ_N` counterpart, sharing
/// vertices, noise set and sign. Every standard draw of the pair comes from
/// one uniform through [`QuantileCoupling`]. `dist.source` is ignored.
pub fn sample_coupled_pair<R: Rng + Clone>(
    inst: &SmoothLabelCoverInstance,
    dist: &TestDistribution,
    coupling: &QuantileCoupling,
    rng: &mut R,
) -> (PointSignPair, PointSignPair) {
    let nv = inst.num_vertices() as u32;
    let mut twin = rng.clone();
    let exact = sample_blocks_with(nv, inst.k, dist, rng, |r| coupling.gaussian(open_uniform(r)));
    let discrete = sample_blocks_with(nv, inst.k, dist, &mut twin, |r| coupling.discrete(open_uniform(r)));
    (embed(inst, exact), embed(inst, discrete))
}

/// One draw of the single-vertex dictatorship test over `ℝ^k`: each
/// coordinate is `bη`, except noisy ones (probability `ε`) which are N(0,1).
pub fn sample_p0<R: Rng>(k: usize, eta: f64, eps: f64, source: GaussianSource, rng: &mut R) -> PointSignPair {
    let b: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
    let noisy: Vec<bool> = (0..k).map(|_| eps > 0.0 && rng.random_bool(eps.min(1.0))).collect();
    let coords = noisy.iter().map(|&n| if n { source.draw(rng) } else { b as f64 * eta }).collect();
    PointSignPair { coords, sign: b, provenance: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::RngSeed;
    use crate::label_cover::{generate_yes_instance, Edge};

    #[test]
    fn derived_parameters() {
        let p = TestParams::new(1, 0.1, 6).unwrap();
        assert_eq!(p.t, 10);
        assert!((p.eps - 0.1 / 320.0).abs() < 1e-18);
        let expect = 216.0 * (p.eps * 0.1 / (20.0 * 6.0 * 10.0)).ln();
        assert!((p.log_eta - expect).abs() < 1e-9);
        assert_eq!(p.eta(), 0.0);
        assert_eq!(p.clone().with_eta(1e-3).eta(), 1e-3);
        assert!(p.log_rho < 0.0);
        assert!(TestParams::new(0, 0.1, 6).is_err());
        assert!(TestParams::new(1, 1.5, 6).is_err());
    }

    #[test]
    fn degenerate_noise_and_shift_give_constant_blocks() {
        let mut rng = RngSeed::new(3).rng();
        let (inst, _) = generate_yes_instance(10, 3, 4, 2, &mut rng).unwrap();
        let dist = TestDistribution { t: 5, eps: 0.0, eta: 0.0, source: GaussianSource::Exact };
        for _ in 0..50 {
            let p = sample_basic_test(&inst, &dist, &mut rng);
            let prov = p.provenance.unwrap();
            assert!(prov.noise.is_empty());
            let mut total = 0.0;
            for row in &prov.block_values {
                assert!(row.iter().all(|&x| x == row[0]));
                total += row[0];
            }
            assert!(total.abs() < 1e-12);
        }
    }

    #[test]
    fn two_blocks_on_distinct_vertices_are_negatives() {
        let inst = SmoothLabelCoverInstance {
            k: 3,
            l: 3,
            vertices: vec![0, 1],
            edges: vec![Edge { u: 0, w: 1, pi_u: vec![0, 1, 2], pi_w: vec![0, 1, 2] }],
            meta: None,
        };
        let dist = TestDistribution { t: 2, eps: 0.0, eta: 0.0, source: GaussianSource::Exact };
        let mut rng = RngSeed::new(8).rng();
        let mut seen = 0;
        for _ in 0..100 {
            let p = sample_basic_test(&inst, &dist, &mut rng);
            let prov = p.provenance.unwrap();
            if prov.vertices[0] != prov.vertices[1] {
                seen += 1;
                for i in 0..3 {
                    assert_eq!(prov.block_values[1][i], -prov.block_values[0][i]);
                }
            }
        }
        assert!(seen > 20);
    }

    #[test]
    fn p0_extremes() {
        let mut rng = RngSeed::new(1).rng();
        let p = sample_p0(5, 0.25, 0.0, GaussianSource::Exact, &mut rng);
        assert!(p.coords.iter().all(|&x| x == 0.25 * p.sign as f64));
    }

    #[test]
    fn coordinate_space_indexing() {
        let raw = CoordinateSpace::Raw { vertices: 4, k: 3 };
        assert_eq!(raw.dim(), 12);
        assert_eq!(raw.index_of(VarId::point(2, 1)), Some(7));
        assert_eq!(raw.var_of(7), VarId::point(2, 1));
        assert_eq!(raw.index_of(VarId::point(4, 0)), None);
        let f = CoordinateSpace::Folded { dim: 5 };
        assert_eq!(f.index_of(VarId::abstract_var('f', 4)), Some(4));
        assert_eq!(f.index_of(VarId::abstract_var('x', 0)), None);
    }

    #[test]
    fn coupled_pairs_share_structure() {
        let mut rng = RngSeed::new(8).rng();
        let (inst, _) = generate_yes_instance(10, 3, 4, 2, &mut rng).unwrap();
        let dist = TestDistribution { t: 5, eps: 0.3, eta: 1e-3, source: GaussianSource::Exact };
        let c = QuantileCoupling::new(16);
        for _ in 0..20 {
            let (a, b) = sample_coupled_pair(&inst, &dist, &c, &mut rng);
            let (pa, pb) = (a.provenance.unwrap(), b.provenance.unwrap());
            assert_eq!((&pa.vertices, &pa.noise, pa.b), (&pb.vertices, &pb.noise, pb.b));
            for &(i, j) in &pb.noise {
                let z = pb.block_values[j as usize][i as usize] * 4.0;
                assert!((z - z.round()).abs() < 1e-9);
            }
        }
    }
}
