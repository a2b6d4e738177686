//! Randomness and fixed linear transforms of the test distribution.

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::poly::{Polynomial, VarId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GaussError {
    #[error("need at least {min} blocks, got {got}")]
    TooFewBlocks { min: usize, got: usize },
}

/// Seed plus stream id. Equal values reproduce identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        RngSeed { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        RngSeed { seed, stream }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut r = ChaCha20Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }

    /// Child seed for sub-task `sub` (a point index, a trial index, ...).
    pub fn derive(&self, sub: u64) -> RngSeed {
        RngSeed { seed: self.seed, stream: splitmix64(self.stream ^ splitmix64(sub.wrapping_add(1))) }
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `T` jointly Gaussian values with unit marginal variance, pairwise
/// covariance `−1/(T−1)` and zero sum: `δ = √(T/(T−1))·(g − ḡ𝟙)`.
pub fn sample_deltas<R: Rng + ?Sized>(t: usize, rng: &mut R) -> Result<Vec<f64>, GaussError> {
    if t < 2 {
        return Err(GaussError::TooFewBlocks { min: 2, got: t });
    }
    let g: Vec<f64> = (0..t).map(|_| standard_normal(rng)).collect();
    Ok(center_and_scale(g))
}

/// Same construction applied to arbitrary i.i.d. draws (used by the discretizer).
pub fn center_and_scale(mut g: Vec<f64>) -> Vec<f64> {
    let t = g.len();
    let mean = g.iter().sum::<f64>() / t as f64;
    let scale = (t as f64 / (t as f64 - 1.0)).sqrt();
    for x in g.iter_mut().take(t - 1) {
        *x = scale * (*x - mean);
    }
    // The last entry closes the sum so that T = 2 gives δ₂ = −δ₁ exactly.
    g[t - 1] = -g[..t - 1].iter().sum::<f64>();
    g
}

/// Orthonormal basis of the complement of 𝟙 in ℝⁿ, by Gram–Schmidt over
/// the standard basis in index order.
fn ones_complement_basis(n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    for e in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis.remove(0);
    basis
}

/// Rows `c_1..c_k`: `c_1 = 𝟙/k`, the rest orthogonal to 𝟙 and each other,
/// all with squared norm `1/k`. `W = C·Y` and `Y = k·Cᵀ·W`.
#[derive(Debug, Clone, PartialEq)]
pub struct WTransform {
    k: usize,
    rows: Vec<Vec<f64>>,
}

pub fn build_w_transform(k: usize) -> WTransform {
    assert!(k >= 1, "block size must be positive");
    let kf = k as f64;
    let mut rows = vec![vec![1.0 / kf; k]];
    for r in ones_complement_basis(k) {
        rows.push(r.into_iter().map(|x| x / kf.sqrt()).collect());
    }
    WTransform { k, rows }
}

impl WTransform {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn forward(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.k);
        self.rows.iter().map(|c| c.iter().zip(y).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn inverse(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.k);
        let kf = self.k as f64;
        (0..self.k).map(|l| kf * self.rows.iter().zip(w).map(|(c, x)| c[l] * x).sum::<f64>()).collect()
    }

    /// Bindings `Y_{labels[l], j} ↦ k·Σ_i c_i[l]·W_{i,j}`, for use with `substitute`.
    /// `labels` lists the block's label indices in transform order.
    pub fn y_to_w_bindings(&self, labels: &[u32], block: u32) -> HashMap<VarId, Polynomial> {
        assert_eq!(labels.len(), self.k);
        let kf = self.k as f64;
        labels
            .iter()
            .enumerate()
            .map(|(l, &label)| {
                let p = Polynomial::linear(
                    self.rows.iter().enumerate().map(|(i, c)| (VarId::w(i as u32, block), kf * c[l])),
                );
                (VarId::block(label, block), p)
            })
            .collect()
    }

    /// Bindings `W_{i,j} ↦ Σ_l c_i[l]·Y_{labels[l], j}`.
    pub fn w_to_y_bindings(&self, labels: &[u32], block: u32) -> HashMap<VarId, Polynomial> {
        assert_eq!(labels.len(), self.k);
        self.rows
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let p = Polynomial::linear(labels.iter().zip(c).map(|(&label, &x)| (VarId::block(label, block), x)));
                (VarId::w(i as u32, block), p)
            })
            .collect()
    }
}

/// Orthonormal rows `a_1..a_T` with `a_1 = 𝟙/√T`. `U = A·W̄` where
/// `W̄ = (W_{1j})_j`, and `W̄ = Aᵀ·U`.
#[derive(Debug, Clone, PartialEq)]
pub struct UTransform {
    t: usize,
    rows: Vec<Vec<f64>>,
}

pub fn build_u_transform(t: usize) -> UTransform {
    assert!(t >= 1, "block count must be positive");
    let mut rows = vec![vec![1.0 / (t as f64).sqrt(); t]];
    rows.extend(ones_complement_basis(t));
    UTransform { t, rows }
}

impl UTransform {
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn forward(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.t);
        self.rows.iter().map(|a| a.iter().zip(w).map(|(x, y)| x * y).sum()).collect()
    }

    pub fn inverse(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.t);
        (0..self.t).map(|j| self.rows.iter().zip(u).map(|(a, x)| a[j] * x).sum()).collect()
    }

    /// Bindings `W_{1j} ↦ Σ_t a_t[j]·U_t`.
    pub fn w_to_u_bindings(&self) -> HashMap<VarId, Polynomial> {
        (0..self.t)
            .map(|j| {
                let p = Polynomial::linear(self.rows.iter().enumerate().map(|(t, a)| (VarId::u(t as u32), a[j])));
                (VarId::w(0, j as u32), p)
            })
            .collect()
    }

    /// Bindings `U_t ↦ Σ_j a_t[j]·W_{1j}`.
    pub fn u_to_w_bindings(&self) -> HashMap<VarId, Polynomial> {
        self.rows
            .iter()
            .enumerate()
            .map(|(t, a)| {
                let p = Polynomial::linear(a.iter().enumerate().map(|(j, &x)| (VarId::w(0, j as u32), x)));
                (VarId::u(t as u32), p)
            })
            .collect()
    }
}

/// One draw of `(Σ B_i)/√N` with `B_i` independent uniform signs.
pub fn discretized_gaussian<R: RngCore + ?Sized>(n: u32, rng: &mut R) -> f64 {
    assert!(n >= 1, "N must be positive");
    let mut ones = 0u32;
    let mut left = n;
    while left > 0 {
        let take = left.min(64);
        let bits = rng.next_u64();
        let masked = if take == 64 { bits } else { bits & ((1u64 << take) - 1) };
        ones += masked.count_ones();
        left -= take;
    }
    (2.0 * ones as f64 - n as f64) / (n as f64).sqrt()
}

/// Source of the per-coordinate standard draws: exact Gaussians, or the
/// normalized Rademacher sums of the discretized test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaussianSource {
    Exact,
    Discretized(u32),
}

impl GaussianSource {
    pub fn draw<R: RngCore>(&self, rng: &mut R) -> f64 {
        match *self {
            GaussianSource::Exact => standard_normal(rng),
            GaussianSource::Discretized(n) => discretized_gaussian(n, rng),
        }
    }
}

/// Uniform draw in the open interval `(0, 1)` from one 64-bit word.
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Monotone coupling of `N(0,1)` with `ℋ_N`: both are quantile transforms
/// of the same uniform draw.
#[derive(Debug, Clone)]
pub struct QuantileCoupling {
    n: u32,
    /// `cdf[m] = Pr[#(+1 signs) ≤ m]`.
    cdf: Vec<f64>,
}

impl QuantileCoupling {
    pub fn new(n: u32) -> Self {
        assert!(n >= 1, "N must be positive");
        let mut pmf = 0.5f64.powi(n as i32);
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(n as usize + 1);
        for m in 0..=n {
            acc += pmf;
            cdf.push(acc);
            pmf *= (n - m) as f64 / (m + 1) as f64;
        }
        QuantileCoupling { n, cdf }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn gaussian(&self, u: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal};
        Normal::standard().inverse_cdf(u)
    }

    pub fn discrete(&self, u: f64) -> f64 {
        let m = self.cdf.partition_point(|&c| c < u).min(self.n as usize);
        (2.0 * m as f64 - self.n as f64) / (self.n as f64).sqrt()
    }
}

/// Empirical moments of `sample_deltas`.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaMoments {
    pub t: usize,
    pub samples: usize,
    /// Per-coordinate sample variance.
    pub variances: Vec<f64>,
    /// Largest deviation of any pairwise sample covariance from `−1/(T−1)`.
    pub max_cov_deviation: f64,
    pub mean_pair_cov: f64,
    pub max_abs_sum: f64,
}

pub fn delta_moments(t: usize, samples: usize, seed: RngSeed) -> Result<DeltaMoments, GaussError> {
    if t < 2 {
        return Err(GaussError::TooFewBlocks { min: 2, got: t });
    }
    const CHUNK: usize = 1 << 14;
    let chunks = samples.div_ceil(CHUNK);
    let (m1, m2, max_sum) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.derive(c as u64).rng();
            let n = CHUNK.min(samples - c * CHUNK);
            let mut s1 = vec![0.0; t];
            let mut s2 = vec![0.0; t * t];
            let mut max_sum = 0f64;
            for _ in 0..n {
                let d = sample_deltas(t, &mut rng).expect("t checked");
                max_sum = max_sum.max(d.iter().sum::<f64>().abs());
                for a in 0..t {
                    s1[a] += d[a];
                    for b in a..t {
                        s2[a * t + b] += d[a] * d[b];
                    }
                }
            }
            (s1, s2, max_sum)
        })
        .reduce(
            || (vec![0.0; t], vec![0.0; t * t], 0.0),
            |mut x, y| {
                x.0.iter_mut().zip(&y.0).for_each(|(a, b)| *a += b);
                x.1.iter_mut().zip(&y.1).for_each(|(a, b)| *a += b);
                (x.0, x.1, x.2.max(y.2))
            },
        );
    let n = samples as f64;
    let cov = |a: usize, b: usize| m2[a.min(b) * t + a.max(b)] / n - (m1[a] / n) * (m1[b] / n);
    let target = -1.0 / (t as f64 - 1.0);
    let mut max_dev = 0f64;
    let mut total = 0.0;
    let mut pairs = 0;
    for a in 0..t {
        for b in a + 1..t {
            let c = cov(a, b);
            max_dev = max_dev.max((c - target).abs());
            total += c;
            pairs += 1;
        }
    }
    Ok(DeltaMoments {
        t,
        samples,
        variances: (0..t).map(|a| cov(a, a)).collect(),
        max_cov_deviation: max_dev,
        mean_pair_cov: total / pairs as f64,
        max_abs_sum: max_sum,
    })
}

/// Projections of the sum-zero correlated vector onto orthonormal directions
/// orthogonal to 𝟙: the variance should be `T/(T−1)` and distinct
/// directions uncorrelated.
#[derive(Debug, Clone, Serialize)]
pub struct OrthoTransformReport {
    pub t: usize,
    pub samples: usize,
    pub expected_variance: f64,
    pub var_f: f64,
    pub var_h: Option<f64>,
    pub cov_fh: Option<f64>,
    pub std_err_var: f64,
    pub std_err_cov: f64,
    pub holds: bool,
}

pub fn verify_ortho_transform_lemma(t: usize, samples: usize, seed: RngSeed) -> Result<OrthoTransformReport, GaussError> {
    if t < 2 {
        return Err(GaussError::TooFewBlocks { min: 2, got: t });
    }
    // Random orthonormal pair in the complement of 𝟙.
    let mut rng = seed.rng();
    let basis = ones_complement_basis(t);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for _ in 0..basis.len().min(2) {
        let coeffs: Vec<f64> = (0..basis.len()).map(|_| standard_normal(&mut rng)).collect();
        let mut v: Vec<f64> =
            (0..t).map(|l| basis.iter().zip(&coeffs).map(|(b, c)| b[l] * c).sum()).collect();
        for d in &dirs {
            let dot: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(d).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        dirs.push(v);
    }
    const CHUNK: usize = 1 << 14;
    let chunks = samples.div_ceil(CHUNK);
    let sums = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.derive(c as u64 + 1).rng();
            let n = CHUNK.min(samples - c * CHUNK);
            let mut s = [0.0f64; 5];
            for _ in 0..n {
                let g = sample_deltas(t, &mut rng).expect("t checked");
                let f: f64 = dirs[0].iter().zip(&g).map(|(a, b)| a * b).sum();
                let h: f64 = dirs.get(1).map_or(0.0, |d| d.iter().zip(&g).map(|(a, b)| a * b).sum());
                s[0] += f;
                s[1] += h;
                s[2] += f * f;
                s[3] += h * h;
                s[4] += f * h;
            }
            s
        })
        .reduce(|| [0.0; 5], |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        });
    let n = samples as f64;
    let expected = t as f64 / (t as f64 - 1.0);
    let var_f = sums[2] / n - (sums[0] / n).powi(2);
    let std_err_var = expected * (2.0 / n).sqrt();
    let std_err_cov = expected / n.sqrt();
    let (var_h, cov_fh) = if dirs.len() == 2 {
        (
            Some(sums[3] / n - (sums[1] / n).powi(2)),
            Some(sums[4] / n - (sums[0] / n) * (sums[1] / n)),
        )
    } else {
        (None, None)
    };
    let holds = (var_f - expected).abs() <= 3.0 * std_err_var
        && var_h.is_none_or(|v| (v - expected).abs() <= 3.0 * std_err_var)
        && cov_fh.is_none_or(|c| c.abs() <= 3.0 * std_err_cov);
    Ok(OrthoTransformReport {
        t,
        samples,
        expected_variance: expected,
        var_f,
        var_h,
        cov_fh,
        std_err_var,
        std_err_cov,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|a| rows.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect()).collect()
    }

    #[test]
    fn deltas_sum_to_zero() {
        let mut rng = RngSeed::new(3).rng();
        for _ in 0..100 {
            let d = sample_deltas(2, &mut rng).unwrap();
            assert_eq!(d[1], -d[0]);
            let d = sample_deltas(7, &mut rng).unwrap();
            assert!(d.iter().sum::<f64>().abs() < 1e-10);
        }
        assert!(sample_deltas(1, &mut rng).is_err());
    }

    #[test]
    fn w_transform_small_blocks() {
        let w = build_w_transform(2);
        let want = [[0.5, 0.5], [0.5, -0.5]];
        for (row, exp) in w.rows().iter().zip(want) {
            assert!(row.iter().zip(exp).all(|(a, b)| (a - b).abs() < 1e-15));
        }
        assert_eq!(build_w_transform(1).rows(), &[vec![1.0]]);
        let g = gram(build_w_transform(4).rows());
        for (a, row) in g.iter().enumerate() {
            for (b, x) in row.iter().enumerate() {
                let want = if a == b { 0.25 } else { 0.0 };
                assert!((x - want).abs() < 1e-12);
            }
        }
        let w5 = build_w_transform(5);
        let y = [0.3, -1.0, 2.0, 0.5, 0.0];
        let back = w5.inverse(&w5.forward(&y));
        assert!(y.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn u_transform_small() {
        assert_eq!(build_u_transform(1).rows(), &[vec![1.0]]);
        let u = build_u_transform(4);
        assert!(u.rows()[0].iter().all(|&x| x == 0.5));
        let g = gram(u.rows());
        for (a, row) in g.iter().enumerate() {
            for (b, x) in row.iter().enumerate() {
                assert!((x - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let u2 = build_u_transform(2);
        let s = 1.0 / 2f64.sqrt();
        assert!((u2.rows()[1][0] - s).abs() < 1e-15 && (u2.rows()[1][1] + s).abs() < 1e-15);
    }

    #[test]
    fn discretized_support() {
        let mut rng = RngSeed::new(11).rng();
        for _ in 0..200 {
            let x = discretized_gaussian(1, &mut rng);
            assert!(x == 1.0 || x == -1.0);
            let y = discretized_gaussian(4, &mut rng);
            assert!([-2.0, -1.0, 0.0, 1.0, 2.0].contains(&y));
        }
        let _ = discretized_gaussian(130, &mut rng);
    }

    #[test]
    fn seeded_streams_reproduce() {
        let a: Vec<u64> = (0..8).map(|_| RngSeed::with_stream(5, 2).rng().next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let s = RngSeed::new(5);
        assert_ne!(s.derive(0).rng().next_u64(), s.derive(1).rng().next_u64());
        assert_ne!(s.derive(0), s);
    }

    #[test]
    fn quantile_coupling_endpoints() {
        let c = QuantileCoupling::new(1);
        assert_eq!(c.discrete(0.3), -1.0);
        assert_eq!(c.discrete(0.7), 1.0);
        assert!(c.gaussian(0.5).abs() < 1e-12);
        assert!((c.gaussian(0.975) - 1.959964).abs() < 1e-5);
        let c = QuantileCoupling::new(256);
        assert!((c.cdf.last().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(c.discrete(1.0 - 1e-300), 16.0);
        let mut rng = RngSeed::new(2).rng();
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..20_000 {
            let z = c.discrete(open_uniform(&mut rng));
            m1 += z;
            m2 += z * z;
        }
        assert!((m1 / 20_000.0).abs() < 0.03);
        assert!((m2 / 20_000.0 - 1.0).abs() < 0.05);
    }
}
