//! Correctness and compression of the LSH coarse embedding: the closed-form
//! Hoeffding lower bound and Monte Carlo estimators.

use rand::Rng;
use rayon::prelude::*;

use crate::bits::PerceptualHash;
use crate::distribution::HashDistribution;
use crate::embedding::{emb_lsh, sim_lsh_count, EmbeddingParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectnessBoundInput {
    pub ell: usize,
    /// Similarity threshold: pairs at distance strictly below it are covered.
    pub t: u32,
    pub d: usize,
    pub gamma: f64,
    pub k: usize,
    /// Slack factor, strictly greater than one.
    pub beta: f64,
}

impl CorrectnessBoundInput {
    /// The smallest `k` (exclusive) for which the bound applies.
    pub fn k_floor(&self) -> f64 {
        self.d as f64 * (f64::from(self.t) + self.beta * self.ell as f64 * self.gamma) / self.ell as f64
    }
}

/// Lower bound on the probability that a pair at distance below `t` shares a bucket:
///
/// `(1 - exp(-2 ell (beta-1)^2 gamma^2)) * (1 - exp(-2 d (k/d - (t + beta ell gamma)/ell)^2))`
///
/// valid for `beta > 1` and `k > d (t + beta ell gamma) / ell`.
pub fn correctness_bound(input: &CorrectnessBoundInput) -> Result<f64> {
    let CorrectnessBoundInput { ell, t, d, gamma, k, beta } = *input;
    if beta.is_nan() || beta <= 1.0 {
        return Err(Error::BoundInapplicable(format!("beta = {beta} must exceed 1")));
    }
    if ell == 0 || d == 0 {
        return Err(Error::BoundInapplicable("ell and d must be positive".into()));
    }
    let floor = input.k_floor();
    if floor.is_nan() || k as f64 <= floor {
        return Err(Error::BoundInapplicable(format!("k = {k} must exceed {floor:.4}")));
    }
    let (ell, d, k) = (ell as f64, d as f64, k as f64);
    let flips = 1.0 - (-2.0 * ell * (beta - 1.0).powi(2) * gamma * gamma).exp();
    let gap = k / d - (f64::from(t) + beta * ell * gamma) / ell;
    let sampling = 1.0 - (-2.0 * d * gap * gap).exp();
    Ok(flips * sampling)
}

/// Fraction of `(pair, trial)` events in which the second hash of a pair lands
/// in the bucket of a fresh embedding of the first.
///
/// Every pair must be closer than `t`.
pub fn empirical_correctness<R: Rng + ?Sized>(
    pairs: &[(PerceptualHash, PerceptualHash)],
    t: u32,
    params: &EmbeddingParams,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if pairs.is_empty() || trials == 0 {
        return Err(Error::Empty("correctness pairs"));
    }
    if let Some((a, b)) = pairs.iter().find(|(a, b)| a.distance(b) >= t) {
        return Err(Error::InvalidParams(format!(
            "pair at distance {} is not closer than T = {t}",
            a.distance(b)
        )));
    }
    let k = params.k as u32;
    let mut hits = 0u64;
    for (a, b) in pairs {
        for _ in 0..trials {
            let req = emb_lsh(a, params, rng);
            let (mask, pattern) = req.mask_and_pattern();
            if b.masked_distance(&pattern, &mask) <= k {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (pairs.len() * trials) as f64)
}

/// For each support hash of `dist`, the database hashes closer than `t`.
pub fn similar_neighbors(dist: &HashDistribution, db: &[PerceptualHash], t: u32) -> Vec<Vec<PerceptualHash>> {
    dist.support().par_iter().map(|s| db.iter().filter(|m| s.distance(m) < t).copied().collect()).collect()
}

/// Samples `queries` hashes from `dist` and pairs each with every database hash
/// closer than `t` (itself included when present).
pub fn sample_similar_pairs<R: Rng + ?Sized>(
    dist: &HashDistribution,
    db: &[PerceptualHash],
    t: u32,
    queries: usize,
    rng: &mut R,
) -> Vec<(PerceptualHash, PerceptualHash)> {
    pairs_from_neighbors(dist, &similar_neighbors(dist, db, t), queries, rng)
}

/// As [`sample_similar_pairs`], reusing precomputed [`similar_neighbors`].
pub fn pairs_from_neighbors<R: Rng + ?Sized>(
    dist: &HashDistribution,
    neighbors: &[Vec<PerceptualHash>],
    queries: usize,
    rng: &mut R,
) -> Vec<(PerceptualHash, PerceptualHash)> {
    let mut pairs = Vec::new();
    for _ in 0..queries {
        let i = dist.sample_index(rng);
        let q = dist.support()[i];
        pairs.extend(neighbors[i].iter().map(|&m| (q, m)));
    }
    pairs
}

/// Mean bucket fraction `|bucket| / |db|` over `trials` queries drawn from `workload`.
pub fn compression_rate<R: Rng + ?Sized>(
    workload: &HashDistribution,
    db: &[PerceptualHash],
    params: &EmbeddingParams,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if db.is_empty() {
        return Err(Error::Empty("database"));
    }
    if trials == 0 {
        return Err(Error::Empty("compression trials"));
    }
    let mut total = 0usize;
    for _ in 0..trials {
        let q = workload.sample(rng);
        let req = emb_lsh(&q, params, rng);
        total += sim_lsh_count(&req, db, params.k);
    }
    Ok(total as f64 / (trials as f64 * db.len() as f64))
}
