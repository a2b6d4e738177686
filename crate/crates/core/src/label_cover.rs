//! Smooth Label Cover instances: generation, audits and labeling evaluation.
//!
//! Vertices are `0..n` and labels are zero-based on both sides: `[k]` on
//! vertices and `[L]` after projection.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LabelCoverError {
    #[error("label {label} of vertex {vertex} is outside [0, {k})")]
    LabelOutOfRange { vertex: u32, label: u32, k: u32 },
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("exhaustive search limited to at most 8 vertices and 6 labels")]
    TooLarge,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub u: u32,
    pub w: u32,
    pub pi_u: Vec<u32>,
    pub pi_w: Vec<u32>,
}

impl Edge {
    /// Projection on the side of `v`; for a self-loop the `u` side.
    pub fn projection(&self, side: Side) -> &[u32] {
        match side {
            Side::U => &self.pi_u,
            Side::W => &self.pi_w,
        }
    }

    pub fn endpoint(&self, side: Side) -> u32 {
        match side {
            Side::U => self.u,
            Side::W => self.w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    U,
    W,
}

/// Generation parameters kept alongside an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InstanceMeta {
    #[serde(skip_serializing_if = "Option::is_none", rename = "J")]
    pub j: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", rename = "R")]
    pub r: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_l: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothLabelCoverInstance {
    pub k: u32,
    #[serde(rename = "L")]
    pub l: u32,
    pub vertices: Vec<u32>,
    pub edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<InstanceMeta>,
}

/// Partial assignment of labels in `[k]` to vertices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Labeling(pub BTreeMap<u32, u32>);

impl Labeling {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, v: u32) -> Option<u32> {
        self.0.get(&v).copied()
    }

    pub fn set(&mut self, v: u32, label: u32) {
        self.0.insert(v, label);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_total(&self, n: usize) -> bool {
        (0..n as u32).all(|v| self.0.contains_key(&v))
    }
}

impl SmoothLabelCoverInstance {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn validate(&self) -> Result<(), LabelCoverError> {
        let bad = |m: String| Err(LabelCoverError::Malformed(m));
        if self.k == 0 || self.l == 0 {
            return bad("k and L must be positive".into());
        }
        if self.vertices.iter().enumerate().any(|(i, &v)| v != i as u32) {
            return bad("vertices must be listed as 0..n".into());
        }
        let n = self.vertices.len() as u32;
        for (idx, e) in self.edges.iter().enumerate() {
            if e.u >= n || e.w >= n {
                return bad(format!("edge {idx} has an endpoint outside the vertex set"));
            }
            for pi in [&e.pi_u, &e.pi_w] {
                if pi.len() != self.k as usize {
                    return bad(format!("edge {idx} projection has length {} instead of {}", pi.len(), self.k));
                }
                if pi.iter().any(|&x| x >= self.l) {
                    return bad(format!("edge {idx} projection leaves [0, {})", self.l));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, LabelCoverError> {
        let inst: Self = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn load(path: &Path) -> Result<Self, LabelCoverError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), LabelCoverError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// For each vertex, the incident (edge index, side) pairs.
    pub fn incidence(&self) -> Vec<Vec<(usize, Side)>> {
        let mut inc = vec![Vec::new(); self.vertices.len()];
        for (i, e) in self.edges.iter().enumerate() {
            inc[e.u as usize].push((i, Side::U));
            inc[e.w as usize].push((i, Side::W));
        }
        inc
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.incidence().iter().map(Vec::len).collect()
    }

    /// Common degree when the graph is regular.
    pub fn regular_degree(&self) -> Option<usize> {
        let d = self.degrees();
        match d.first() {
            Some(&first) if d.iter().all(|&x| x == first) => Some(first),
            None => Some(0),
            _ => None,
        }
    }

    pub fn is_connected(&self) -> bool {
        let n = self.vertices.len();
        if n == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.u as usize].push(e.w as usize);
            adj[e.w as usize].push(e.u as usize);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &x in &adj[v] {
                if !seen[x] {
                    seen[x] = true;
                    queue.push_back(x);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn check_labels(&self, sigma: &Labeling) -> Result<(), LabelCoverError> {
        for (&vertex, &label) in &sigma.0 {
            if label >= self.k {
                return Err(LabelCoverError::LabelOutOfRange { vertex, label, k: self.k });
            }
        }
        Ok(())
    }

    pub fn edge_satisfied(&self, e: &Edge, sigma: &Labeling) -> bool {
        match (sigma.get(e.u), sigma.get(e.w)) {
            (Some(a), Some(b)) => e.pi_u[a as usize] == e.pi_w[b as usize],
            _ => false,
        }
    }

    /// Fraction of edges whose endpoints are both labeled with agreeing
    /// projections. An instance without edges scores 0.
    pub fn satisfied_fraction(&self, sigma: &Labeling) -> Result<f64, LabelCoverError> {
        self.check_labels(sigma)?;
        if self.edges.is_empty() {
            return Ok(0.0);
        }
        let good = self.edges.par_iter().filter(|e| self.edge_satisfied(e, sigma)).count();
        Ok(good as f64 / self.edges.len() as f64)
    }

    /// Largest collision probability `Pr_{e∼v}[π_{e,v}(i) = π_{e,v}(j)]` over
    /// vertices `v` and label pairs `i ≠ j`.
    pub fn smoothness_audit(&self) -> f64 {
        let inc = self.incidence();
        let k = self.k as usize;
        inc.par_iter()
            .filter(|edges| !edges.is_empty())
            .map(|edges| {
                let mut worst = 0f64;
                for i in 0..k {
                    for j in i + 1..k {
                        let hits = edges
                            .iter()
                            .filter(|&&(e, s)| {
                                let pi = self.edges[e].projection(s);
                                pi[i] == pi[j]
                            })
                            .count();
                        worst = worst.max(hits as f64 / edges.len() as f64);
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Largest preimage size `|π_{e,v}^{-1}(j)|` over all edge endpoints and `j`.
    pub fn max_preimage_size(&self) -> usize {
        self.edges
            .iter()
            .flat_map(|e| [&e.pi_u, &e.pi_w])
            .map(|pi| {
                let mut counts = vec![0usize; self.l as usize];
                pi.iter().for_each(|&x| counts[x as usize] += 1);
                counts.into_iter().max().unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }

    /// Fraction of edges with both endpoints in `subset`, against the
    /// weak-expansion threshold `δ²/2` where `δ = |subset|/|V|`.
    pub fn weak_expansion_audit(&self, subset: &BTreeSet<u32>) -> WeakExpansion {
        let n = self.vertices.len().max(1) as f64;
        let delta = subset.len() as f64 / n;
        let induced = self.edges.iter().filter(|e| subset.contains(&e.u) && subset.contains(&e.w)).count();
        let fraction = if self.edges.is_empty() { 0.0 } else { induced as f64 / self.edges.len() as f64 };
        let bound = delta * delta / 2.0;
        WeakExpansion { induced_edges: induced, fraction, delta, bound, flagged: fraction < bound }
    }

    pub fn audit(&self) -> InstanceAudit {
        InstanceAudit {
            vertices: self.vertices.len(),
            edges: self.edges.len(),
            k: self.k,
            l: self.l,
            regular_degree: self.regular_degree(),
            connected: self.is_connected(),
            smoothness: self.smoothness_audit(),
            max_preimage: self.max_preimage_size(),
            preimage_bound: self.meta.as_ref().and_then(|m| m.t_l),
        }
    }

    /// Applies a vertex permutation: vertex `v` becomes `perm[v]`.
    pub fn relabel_vertices(&self, perm: &[u32]) -> Self {
        let mut out = self.clone();
        for e in &mut out.edges {
            e.u = perm[e.u as usize];
            e.w = perm[e.w as usize];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakExpansion {
    pub induced_edges: usize,
    pub fraction: f64,
    pub delta: f64,
    pub bound: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceAudit {
    pub vertices: usize,
    pub edges: usize,
    pub k: u32,
    #[serde(rename = "L")]
    pub l: u32,
    pub regular_degree: Option<usize>,
    pub connected: bool,
    pub smoothness: f64,
    pub max_preimage: usize,
    pub preimage_bound: Option<u32>,
}

/// Random simple `degree`-regular connected graph on `nv` vertices, as an
/// edge list. Stubs are paired at random avoiding loops and repeated edges;
/// dead ends and disconnected outcomes restart the construction.
pub fn random_regular_graph<R: Rng + ?Sized>(
    nv: usize,
    degree: usize,
    rng: &mut R,
) -> Result<Vec<(u32, u32)>, LabelCoverError> {
    if nv == 0 {
        return Err(LabelCoverError::Infeasible("no vertices".into()));
    }
    if (nv * degree) % 2 != 0 {
        return Err(LabelCoverError::Infeasible("degree·nv must be even".into()));
    }
    if degree >= nv {
        return Err(LabelCoverError::Infeasible("degree must be below the vertex count".into()));
    }
    if degree == 0 && nv > 1 {
        return Err(LabelCoverError::Infeasible("a 0-regular graph on several vertices is disconnected".into()));
    }
    'attempt: for _ in 0..10_000 {
        let mut stubs: Vec<u32> = (0..nv as u32).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
        stubs.shuffle(rng);
        let mut edges = Vec::with_capacity(stubs.len() / 2);
        let mut seen = HashSet::new();
        while !stubs.is_empty() {
            let mut placed = false;
            for _ in 0..100 {
                let a = rng.random_range(0..stubs.len());
                let b = rng.random_range(0..stubs.len());
                let (x, y) = (stubs[a], stubs[b]);
                if a == b || x == y || seen.contains(&(x.min(y), x.max(y))) {
                    continue;
                }
                seen.insert((x.min(y), x.max(y)));
                edges.push((x.min(y), x.max(y)));
                let (hi, lo) = (a.max(b), a.min(b));
                stubs.swap_remove(hi);
                stubs.swap_remove(lo);
                placed = true;
                break;
            }
            if !placed {
                continue 'attempt;
            }
        }
        let probe = SmoothLabelCoverInstance {
            k: 1,
            l: 1,
            vertices: (0..nv as u32).collect(),
            edges: edges.iter().map(|&(u, w)| Edge { u, w, pi_u: vec![0], pi_w: vec![0] }).collect(),
            meta: None,
        };
        if probe.is_connected() {
            edges.sort_unstable();
            return Ok(edges);
        }
    }
    Err(LabelCoverError::Infeasible("could not build a connected regular graph".into()))
}

fn check_labels_sizes(k: u32, l: u32) -> Result<(), LabelCoverError> {
    if l == 0 || k < l {
        return Err(LabelCoverError::Infeasible("need k ≥ L ≥ 1".into()));
    }
    Ok(())
}

/// Regular connected instance with a planted labeling satisfying every edge.
/// Each projection entry is uniform in `[L]`, except that `π_w(σ(w))` is set
/// to `π_u(σ(u))`.
pub fn generate_yes_instance<R: Rng + ?Sized>(
    nv: usize,
    degree: usize,
    k: u32,
    l: u32,
    rng: &mut R,
) -> Result<(SmoothLabelCoverInstance, Labeling), LabelCoverError> {
    check_labels_sizes(k, l)?;
    let graph = random_regular_graph(nv, degree, rng)?;
    let sigma = Labeling((0..nv as u32).map(|v| (v, rng.random_range(0..k))).collect());
    let edges = graph
        .into_iter()
        .map(|(u, w)| {
            let pi_u: Vec<u32> = (0..k).map(|_| rng.random_range(0..l)).collect();
            let mut pi_w: Vec<u32> = (0..k).map(|_| rng.random_range(0..l)).collect();
            pi_w[sigma.0[&w] as usize] = pi_u[sigma.0[&u] as usize];
            Edge { u, w, pi_u, pi_w }
        })
        .collect();
    let inst = SmoothLabelCoverInstance {
        k,
        l,
        vertices: (0..nv as u32).collect(),
        edges,
        meta: Some(InstanceMeta { generator: Some("yes".into()), ..Default::default() }),
    };
    Ok((inst, sigma))
}

/// Regular connected instance with uniformly random projections and no plant.
pub fn random_instance<R: Rng + ?Sized>(
    nv: usize,
    degree: usize,
    k: u32,
    l: u32,
    rng: &mut R,
) -> Result<SmoothLabelCoverInstance, LabelCoverError> {
    check_labels_sizes(k, l)?;
    let graph = random_regular_graph(nv, degree, rng)?;
    let edges = graph
        .into_iter()
        .map(|(u, w)| Edge {
            u,
            w,
            pi_u: (0..k).map(|_| rng.random_range(0..l)).collect(),
            pi_w: (0..k).map(|_| rng.random_range(0..l)).collect(),
        })
        .collect();
    Ok(SmoothLabelCoverInstance {
        k,
        l,
        vertices: (0..nv as u32).collect(),
        edges,
        meta: Some(InstanceMeta { generator: Some("random".into()), ..Default::default() }),
    })
}

/// Best satisfied fraction over all total labelings, with one optimal labeling.
pub fn exhaustive_optimum(inst: &SmoothLabelCoverInstance) -> Result<(f64, Labeling), LabelCoverError> {
    let n = inst.num_vertices();
    let k = inst.k as usize;
    if n > 8 || k > 6 {
        return Err(LabelCoverError::TooLarge);
    }
    let total = (k as u64).pow(n as u32);
    let decode = |mut code: u64| -> Vec<u32> {
        (0..n)
            .map(|_| {
                let x = (code % k as u64) as u32;
                code /= k as u64;
                x
            })
            .collect()
    };
    let (best, code) = (0..total)
        .into_par_iter()
        .map(|code| {
            let labels = decode(code);
            let good = inst
                .edges
                .iter()
                .filter(|e| e.pi_u[labels[e.u as usize] as usize] == e.pi_w[labels[e.w as usize] as usize])
                .count();
            (good, std::cmp::Reverse(code))
        })
        .max()
        .map(|(g, c)| (g, c.0))
        .unwrap_or((0, 0));
    let labeling = Labeling(decode(code).into_iter().enumerate().map(|(v, x)| (v as u32, x)).collect());
    let frac = if inst.edges.is_empty() { 0.0 } else { best as f64 / inst.edges.len() as f64 };
    Ok((frac, labeling))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::RngSeed;

    fn single_edge(pi_u: Vec<u32>, pi_w: Vec<u32>, k: u32, l: u32) -> SmoothLabelCoverInstance {
        SmoothLabelCoverInstance { k, l, vertices: vec![0, 1], edges: vec![Edge { u: 0, w: 1, pi_u, pi_w }], meta: None }
    }

    #[test]
    fn satisfied_fraction_basics() {
        let inst = single_edge(vec![0, 1, 2], vec![0, 1, 2], 3, 3);
        let mut s = Labeling::empty();
        assert_eq!(inst.satisfied_fraction(&s).unwrap(), 0.0);
        s.set(0, 2);
        s.set(1, 2);
        assert_eq!(inst.satisfied_fraction(&s).unwrap(), 1.0);
        s.set(1, 7);
        assert!(matches!(inst.satisfied_fraction(&s), Err(LabelCoverError::LabelOutOfRange { .. })));
    }

    #[test]
    fn tiny_yes_instance() {
        let mut rng = RngSeed::new(1).rng();
        let (inst, sigma) = generate_yes_instance(2, 1, 3, 2, &mut rng).unwrap();
        assert_eq!(inst.edges.len(), 1);
        assert_eq!(inst.satisfied_fraction(&sigma).unwrap(), 1.0);
        assert!(generate_yes_instance(3, 1, 3, 2, &mut rng).is_err());
        assert!(generate_yes_instance(4, 2, 2, 3, &mut rng).is_err());
    }

    #[test]
    fn yes_instance_is_regular_and_connected() {
        let mut rng = RngSeed::new(9).rng();
        let (inst, sigma) = generate_yes_instance(20, 4, 6, 4, &mut rng).unwrap();
        assert_eq!(inst.regular_degree(), Some(4));
        assert!(inst.is_connected());
        assert_eq!(inst.edges.len(), 40);
        assert_eq!(inst.satisfied_fraction(&sigma).unwrap(), 1.0);
        let json = inst.to_json();
        assert_eq!(SmoothLabelCoverInstance::from_json(&json).unwrap(), inst);
        assert!(json.contains("\"L\""));
    }

    #[test]
    fn smoothness_extremes() {
        let inj = single_edge(vec![0, 1, 2], vec![2, 1, 0], 3, 3);
        assert_eq!(inj.smoothness_audit(), 0.0);
        let constant = single_edge(vec![0, 0, 0], vec![0, 0, 0], 3, 1);
        assert_eq!(constant.smoothness_audit(), 1.0);
        assert_eq!(constant.max_preimage_size(), 3);
    }

    #[test]
    fn weak_expansion_on_complete_graph() {
        let n = 10u32;
        let mut edges = Vec::new();
        for u in 0..n {
            for w in u + 1..n {
                edges.push(Edge { u, w, pi_u: vec![0], pi_w: vec![0] });
            }
        }
        let inst = SmoothLabelCoverInstance { k: 1, l: 1, vertices: (0..n).collect(), edges, meta: None };
        let all: BTreeSet<u32> = (0..n).collect();
        assert_eq!(inst.weak_expansion_audit(&all).fraction, 1.0);
        let none = inst.weak_expansion_audit(&BTreeSet::new());
        assert_eq!((none.fraction, none.bound), (0.0, 0.0));
        let mut rng = RngSeed::new(4).rng();
        for _ in 0..20 {
            let sub: BTreeSet<u32> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
            let s = sub.len();
            let r = inst.weak_expansion_audit(&sub);
            assert_eq!(r.induced_edges, s * s.saturating_sub(1) / 2);
        }
    }

    #[test]
    fn exhaustive_finds_planted_optimum() {
        let mut rng = RngSeed::new(2).rng();
        let (inst, _) = generate_yes_instance(6, 3, 4, 2, &mut rng).unwrap();
        let (best, lab) = exhaustive_optimum(&inst).unwrap();
        assert_eq!(best, 1.0);
        assert_eq!(inst.satisfied_fraction(&lab).unwrap(), 1.0);
        let r = random_instance(6, 3, 4, 4, &mut rng).unwrap();
        let (best, lab) = exhaustive_optimum(&r).unwrap();
        assert_eq!(r.satisfied_fraction(&lab).unwrap(), best);
    }
}
