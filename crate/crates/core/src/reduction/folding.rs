//! Folding over the edge-consistency constraints of a label-cover instance.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::Serialize;

use super::{raw_index, ReductionError};
use crate::hermite::{to_hermite, HermiteIndex};
use crate::label_cover::SmoothLabelCoverInstance;
use crate::poly::{Monomial, Polynomial, VarId};

/// Relative singular-value threshold for rank decisions.
const RANK_TOL: f64 = 1e-9;

/// Constraint vectors `h^e_j` and an orthonormal basis of their orthogonal complement `ℱ`.
#[derive(Debug, Clone)]
pub struct FoldingBasis {
    ambient: usize,
    /// Sparse `h^e_j`, in (edge, j) order.
    constraints: Vec<Vec<(usize, f64)>>,
    /// Rows form an orthonormal basis of `ℱ`; shape `dim × ambient`.
    basis: DMatrix<f64>,
}

fn constraint_vector(inst: &SmoothLabelCoverInstance, e: usize, j: u32) -> Vec<(usize, f64)> {
    let edge = &inst.edges[e];
    let mut h: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, &x) in edge.pi_u.iter().enumerate() {
        if x == j {
            *h.entry(raw_index(inst.k, edge.u, i as u32)).or_default() += 1.0;
        }
    }
    for (i, &x) in edge.pi_w.iter().enumerate() {
        if x == j {
            *h.entry(raw_index(inst.k, edge.w, i as u32)).or_default() -= 1.0;
        }
    }
    h.into_iter().filter(|&(_, x)| x != 0.0).collect()
}

/// Stacks all `h^e_j` and takes the right singular vectors with negligible
/// singular value (relative tolerance `1e-9`) as the basis of `ℱ`.
pub fn build_folding_basis(inst: &SmoothLabelCoverInstance) -> FoldingBasis {
    let n = inst.num_vertices() * inst.k as usize;
    let constraints: Vec<Vec<(usize, f64)>> = (0..inst.edges.len())
        .flat_map(|e| (0..inst.l).map(move |j| (e, j)))
        .map(|(e, j)| constraint_vector(inst, e, j))
        .collect();
    let nonzero: Vec<&Vec<(usize, f64)>> = constraints.iter().filter(|h| !h.is_empty()).collect();
    if nonzero.is_empty() {
        return FoldingBasis { ambient: n, constraints, basis: DMatrix::identity(n, n) };
    }
    // Pad to at least n rows so the decomposition returns a full set of right singular vectors.
    let rows = nonzero.len().max(n);
    let mut h = DMatrix::<f64>::zeros(rows, n);
    for (r, hv) in nonzero.iter().enumerate() {
        for &(c, x) in hv.iter() {
            h[(r, c)] = x;
        }
    }
    let svd = h.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let null: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] <= RANK_TOL * smax).collect();
    let mut basis = DMatrix::<f64>::zeros(null.len(), n);
    for (r, &i) in null.iter().enumerate() {
        basis.set_row(r, &v_t.row(i));
    }
    FoldingBasis { ambient: n, constraints, basis }
}

impl FoldingBasis {
    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    /// Dimension of `ℱ`.
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn constraints(&self) -> &[Vec<(usize, f64)>] {
        &self.constraints
    }

    fn check(&self, got: usize, expected: usize) -> Result<(), ReductionError> {
        if got != expected {
            return Err(ReductionError::DimensionMismatch { expected, got });
        }
        Ok(())
    }

    /// Coordinates of the projection of `y` onto `ℱ` in the fixed basis.
    pub fn fold(&self, y: &[f64]) -> Result<Vec<f64>, ReductionError> {
        self.check(y.len(), self.ambient)?;
        let mut out = vec![0.0; self.dim()];
        for (c, &x) in y.iter().enumerate() {
            if x != 0.0 {
                for (r, o) in out.iter_mut().enumerate() {
                    *o += self.basis[(r, c)] * x;
                }
            }
        }
        Ok(out)
    }

    /// Representation in `ℝ^𝒴` of a vector given in `ℱ`-coordinates.
    pub fn unfold(&self, z: &[f64]) -> Result<Vec<f64>, ReductionError> {
        self.check(z.len(), self.dim())?;
        let mut out = vec![0.0; self.ambient];
        for (r, &x) in z.iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.basis[(r, c)] * x;
            }
        }
        Ok(out)
    }

    /// Orthogonal projection of `y` onto `ℱ`, in ambient coordinates.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>, ReductionError> {
        self.unfold(&self.fold(y)?)
    }

    /// Largest `|⟨z, h^e_j⟩|` over all constraint vectors.
    pub fn max_constraint_residual(&self, z: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|h| h.iter().map(|&(c, x)| z[c] * x).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Linear form `Σ_c r_c·Y_c` in raw variables, given a folded-coordinate row index.
    pub fn basis_linear_form(&self, r: usize, k: u32) -> Polynomial {
        Polynomial::linear(
            (0..self.ambient).map(|c| (VarId::point(c as u32 / k, c as u32 % k), self.basis[(r, c)])),
        )
    }

    /// Rewrites a polynomial over folded coordinates `f_r` as a polynomial over raw `Y^v_i`.
    pub fn unfold_polynomial(&self, p: &Polynomial, k: u32) -> Polynomial {
        let bindings = (0..self.dim())
            .map(|r| (VarId::abstract_var('f', r as u32), self.basis_linear_form(r, k)))
            .collect();
        p.substitute(&bindings)
    }

    /// Rewrites a raw polynomial over folded coordinates by `Y = Bᵀ f`; the
    /// result agrees with the original on `ℱ`.
    pub fn fold_polynomial(&self, p: &Polynomial, k: u32) -> Polynomial {
        let bindings = (0..self.ambient)
            .map(|c| {
                let form = Polynomial::linear(
                    (0..self.dim()).map(|r| (VarId::abstract_var('f', r as u32), self.basis[(r, c)])),
                );
                (VarId::point(c as u32 / k, c as u32 % k), form)
            })
            .collect();
        p.substitute(&bindings)
    }
}

fn preimage_vars(inst: &SmoothLabelCoverInstance, e: usize, j: u32) -> (Vec<VarId>, Vec<VarId>) {
    let edge = &inst.edges[e];
    let side = |pi: &[u32], v: u32| -> Vec<VarId> {
        pi.iter().enumerate().filter(|&(_, &x)| x == j).map(|(i, _)| VarId::point(v, i as u32)).collect()
    };
    (side(&edge.pi_u, edge.u), side(&edge.pi_w, edge.w))
}

fn check_triple(inst: &SmoothLabelCoverInstance, e: usize, j: u32) -> Result<(), ReductionError> {
    if e >= inst.edges.len() {
        return Err(ReductionError::InvalidConstraint(format!("edge {e} does not exist")));
    }
    if j >= inst.l {
        return Err(ReductionError::InvalidConstraint(format!("projected label {j} is outside [0, {})", inst.l)));
    }
    Ok(())
}

fn tolerance(q: &Polynomial) -> f64 {
    1e-9 * q.max_abs_coeff().max(1.0)
}

/// Checks `Σ_{i∈π_u⁻¹(j)} c_{Q, M·Y^u_i} = Σ_{i∈π_w⁻¹(j)} c_{Q, M·Y^w_i}`.
/// The triple is invalid when `M` involves any of those preimage variables.
pub fn check_valid_constraint(
    q: &Polynomial,
    inst: &SmoothLabelCoverInstance,
    e: usize,
    j: u32,
    m: &Monomial,
) -> Result<bool, ReductionError> {
    check_triple(inst, e, j)?;
    let (us, ws) = preimage_vars(inst, e, j);
    if us.iter().chain(&ws).any(|&v| m.exponent(v) > 0) {
        return Err(ReductionError::InvalidConstraint(format!("monomial {m} contains a constrained variable")));
    }
    let lhs: f64 = us.iter().map(|&v| q.coeff(&m.mul(&Monomial::var(v)))).sum();
    let rhs: f64 = ws.iter().map(|&v| q.coeff(&m.mul(&Monomial::var(v)))).sum();
    Ok((lhs - rhs).abs() <= tolerance(q))
}

/// Coefficient of each single constrained variable `x` in `Q`: the part of
/// `Q` of degree exactly one in the constrained set, with `x` as that factor.
fn linear_parts(q: &Polynomial, constrained: &BTreeSet<VarId>) -> BTreeMap<VarId, Polynomial> {
    let mut parts: BTreeMap<VarId, Vec<(Monomial, f64)>> = BTreeMap::new();
    for (m, &c) in q.terms() {
        let (inside, rest) = m.partition_vars(|v| constrained.contains(&v));
        if let [(x, 1)] = inside.vars() {
            parts.entry(*x).or_default().push((rest, c));
        }
    }
    parts.into_iter().map(|(v, t)| (v, Polynomial::from_terms(t))).collect()
}

/// Same constraints with the monomials `M` replaced by product-Hermite basis
/// elements over all remaining variables.
pub fn check_valid_constraint_hermite(
    q: &Polynomial,
    inst: &SmoothLabelCoverInstance,
    e: usize,
    j: u32,
) -> Result<bool, ReductionError> {
    check_triple(inst, e, j)?;
    let (us, ws) = preimage_vars(inst, e, j);
    let constrained: BTreeSet<VarId> = us.iter().chain(&ws).copied().collect();
    let parts = linear_parts(q, &constrained);
    let others: BTreeSet<VarId> = q.variables().difference(&constrained).copied().collect();
    let mut balance: BTreeMap<HermiteIndex, f64> = BTreeMap::new();
    for (sign, vars) in [(1.0, &us), (-1.0, &ws)] {
        for v in vars {
            let Some(part) = parts.get(v) else { continue };
            let exp = to_hermite(part, &others).expect("degrees within table range");
            for (idx, coeff) in exp.normalized() {
                *balance.entry(idx).or_default() += sign * coeff.constant_term();
            }
        }
    }
    let tol = tolerance(q);
    Ok(balance.values().all(|x| x.abs() <= tol))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintViolation {
    pub edge: usize,
    pub j: u32,
    pub monomial: String,
    pub lhs: f64,
    pub rhs: f64,
}

/// Every valid constraint `(e, j, M)` with a nonzero side that fails for `Q`.
pub fn folding_violations(q: &Polynomial, inst: &SmoothLabelCoverInstance) -> Vec<ConstraintViolation> {
    let tol = tolerance(q);
    let mut out = Vec::new();
    for e in 0..inst.edges.len() {
        for j in 0..inst.l {
            let (us, ws) = preimage_vars(inst, e, j);
            let constrained: BTreeSet<VarId> = us.iter().chain(&ws).copied().collect();
            let mut sums: BTreeMap<Monomial, (f64, f64)> = BTreeMap::new();
            for (m, &c) in q.terms() {
                let (inside, rest) = m.partition_vars(|v| constrained.contains(&v));
                if let [(x, 1)] = inside.vars() {
                    let entry = sums.entry(rest).or_default();
                    if us.contains(x) {
                        entry.0 += c;
                    } else {
                        entry.1 += c;
                    }
                }
            }
            for (m, (lhs, rhs)) in sums {
                if (lhs - rhs).abs() > tol {
                    out.push(ConstraintViolation { edge: e, j, monomial: m.to_string(), lhs, rhs });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::{standard_normal, RngSeed};
    use crate::label_cover::{generate_yes_instance, Edge};

    fn identity_edge(k: u32) -> SmoothLabelCoverInstance {
        SmoothLabelCoverInstance {
            k,
            l: k,
            vertices: vec![0, 1],
            edges: vec![Edge { u: 0, w: 1, pi_u: (0..k).collect(), pi_w: (0..k).collect() }],
            meta: None,
        }
    }

    #[test]
    fn identity_projections_force_equal_coordinates() {
        let inst = identity_edge(3);
        let fb = build_folding_basis(&inst);
        assert_eq!(fb.dim(), 3);
        let y = [1.0, 2.0, 3.0, 5.0, 0.0, -1.0];
        let p = fb.project(&y).unwrap();
        for i in 0..3 {
            assert!((p[i] - p[i + 3]).abs() < 1e-12);
            assert!((p[i] - (y[i] + y[i + 3]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn no_edges_is_identity() {
        let inst = SmoothLabelCoverInstance { k: 2, l: 2, vertices: vec![0, 1, 2], edges: vec![], meta: None };
        let fb = build_folding_basis(&inst);
        assert_eq!(fb.dim(), 6);
        let y = [1.0, -2.0, 0.5, 0.0, 3.0, 4.0];
        assert_eq!(fb.fold(&y).unwrap(), y.to_vec());
    }

    #[test]
    fn random_instance_basis_is_orthonormal_and_orthogonal_to_constraints() {
        let mut rng = RngSeed::new(12).rng();
        let (inst, _) = generate_yes_instance(12, 3, 5, 3, &mut rng).unwrap();
        let fb = build_folding_basis(&inst);
        let b = fb.basis();
        let gram = b * b.transpose();
        assert!((gram - DMatrix::identity(fb.dim(), fb.dim())).abs().max() < 1e-9);
        for r in 0..fb.dim() {
            let row: Vec<f64> = b.row(r).iter().copied().collect();
            assert!(fb.max_constraint_residual(&row) < 1e-9);
        }
        let y: Vec<f64> = (0..fb.ambient_dim()).map(|_| standard_normal(&mut rng)).collect();
        let z = fb.project(&y).unwrap();
        assert!(fb.max_constraint_residual(&z) < 1e-9);
        let n2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let perp: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a - b).collect();
        assert!((n2(&y) - n2(&fb.fold(&y).unwrap()) - n2(&perp)).abs() < 1e-9);
        let zz = fb.project(&z).unwrap();
        assert!(z.iter().zip(&zz).all(|(a, b)| (a - b).abs() < 1e-9));
        assert!(fb.fold(&[1.0]).is_err());
    }

    #[test]
    fn constraint_checks() {
        let inst = identity_edge(2);
        // Q = Y^0_0 alone: u-side sum 1, w-side 0.
        let q = Polynomial::var(VarId::point(0, 0));
        assert!(!check_valid_constraint(&q, &inst, 0, 0, &Monomial::one()).unwrap());
        assert!(check_valid_constraint(&q, &inst, 0, 1, &Monomial::one()).unwrap());
        let bad_m = Monomial::var(VarId::point(1, 0));
        assert!(check_valid_constraint(&q, &inst, 0, 0, &bad_m).is_err());
        assert!(check_valid_constraint(&q, &inst, 3, 0, &Monomial::one()).is_err());
        let good = Polynomial::var(VarId::point(0, 0)) + Polynomial::var(VarId::point(1, 0));
        assert!(folding_violations(&good, &inst).is_empty());
        assert_eq!(folding_violations(&q, &inst).len(), 1);
        assert!(!check_valid_constraint_hermite(&q, &inst, 0, 0).unwrap());
        assert!(check_valid_constraint_hermite(&good, &inst, 0, 0).unwrap());
    }

    #[test]
    fn products_of_folded_forms_satisfy_constraints() {
        let mut rng = RngSeed::new(5).rng();
        let (inst, _) = generate_yes_instance(6, 3, 3, 2, &mut rng).unwrap();
        let fb = build_folding_basis(&inst);
        let f = |r: usize| Polynomial::var(VarId::abstract_var('f', r as u32));
        let folded = f(0) * f(1).scale(&2.0) + f(2).scale(&-0.5) + f(0) * f(0);
        let q = fb.unfold_polynomial(&folded, inst.k);
        assert!(folding_violations(&q, &inst).is_empty());
        for e in 0..inst.edges.len() {
            for j in 0..inst.l {
                assert!(check_valid_constraint_hermite(&q, &inst, e, j).unwrap());
            }
        }
        let back = fb.fold_polynomial(&q, inst.k);
        assert!(back.approx_eq(&folded, 1e-9));
    }
}
