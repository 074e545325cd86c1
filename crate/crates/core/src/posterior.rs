//! Bayes-optimal matching posteriors.
//!
//! Given one or more coarse embeddings of an unknown hash `v` drawn from a
//! known distribution, the probability that `v` equals a target is
//!
//! ```text
//! g^δ(t) (1-g)^(n-δ(t)) D(t)  /  Σ_v' g^δ(v') (1-g)^(n-δ(v')) D(v')
//! ```
//!
//! where `δ(v)` sums the restricted distances of `v` to each embedding, `n` is
//! the total number of revealed bits and the sum runs over the support of `D`.
//! Products are formed in log space; `g^(q d)` underflows quickly otherwise.

use std::collections::HashMap;

use crate::bits::PerceptualHash;
use crate::distribution::HashDistribution;
use crate::embedding::{CoarseEmbedding, IndexSet};
use crate::error::{Error, Result};

/// Index sets at most this long get a dense table over all `2^d` requests.
pub const TABLE_MAX_D: usize = 20;

#[derive(Clone, Copy, Debug)]
struct LogWeights {
    flip: f64,
    keep: f64,
    exact: bool,
}

impl LogWeights {
    fn new(gamma: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&gamma) {
            return Err(Error::InvalidParams(format!("gamma = {gamma} outside [0, 0.5)")));
        }
        Ok(Self { flip: gamma.ln(), keep: (-gamma).ln_1p(), exact: gamma == 0.0 })
    }

    /// Log-likelihood of `mismatches` flips among `total` revealed bits.
    #[inline]
    fn log_likelihood(&self, mismatches: u32, total: u32) -> f64 {
        if self.exact {
            return if mismatches == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        f64::from(mismatches) * self.flip + f64::from(total - mismatches) * self.keep
    }
}

/// `exp(numerator - logsumexp(terms))`, with an all-impossible denominator mapped to zero.
fn normalized(numerator: f64, terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || numerator == f64::NEG_INFINITY {
        return 0.0;
    }
    let sum: f64 = terms.map(|t| (t - max).exp()).sum();
    let lse = max + sum.ln();
    (numerator - lse).exp().min(1.0)
}

/// Posterior that the embedded hash equals `target`, from a single request.
///
/// A target outside the support has posterior zero.
pub fn posterior_single(
    req: &CoarseEmbedding,
    target: &PerceptualHash,
    dist: &HashDistribution,
    gamma: f64,
) -> Result<f64> {
    posterior_repeated(std::slice::from_ref(req), target, dist, gamma)
}

/// Posterior that all `reqs` embed `target`, assuming independent flip coins.
pub fn posterior_repeated(
    reqs: &[CoarseEmbedding],
    target: &PerceptualHash,
    dist: &HashDistribution,
    gamma: f64,
) -> Result<f64> {
    let terms = log_terms(reqs, dist, gamma)?;
    let Some(t) = dist.position(target) else {
        return Ok(0.0);
    };
    Ok(normalized(terms[t], terms.iter().copied()))
}

/// Posterior of every support hash, in support order.
pub fn posterior_all(reqs: &[CoarseEmbedding], dist: &HashDistribution, gamma: f64) -> Result<Vec<f64>> {
    let terms = log_terms(reqs, dist, gamma)?;
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(vec![0.0; terms.len()]);
    }
    let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    Ok(terms.iter().map(|t| (t - lse).exp().min(1.0)).collect())
}

/// Unnormalized log posterior of each support hash.
fn log_terms(reqs: &[CoarseEmbedding], dist: &HashDistribution, gamma: f64) -> Result<Vec<f64>> {
    if dist.is_empty() {
        return Err(Error::EmptySupport);
    }
    if reqs.is_empty() {
        return Err(Error::Empty("embeddings"));
    }
    let weights = LogWeights::new(gamma)?;
    let masks: Vec<_> = reqs.iter().map(CoarseEmbedding::mask_and_pattern).collect();
    let total: u32 = reqs.iter().map(|r| r.d() as u32).sum();
    Ok(dist
        .support()
        .iter()
        .zip(dist.masses())
        .map(|(v, m)| {
            let delta: u32 = masks.iter().map(|(mask, p)| v.masked_distance(p, mask)).sum();
            weights.log_likelihood(delta, total) + m.ln()
        })
        .collect())
}

/// Support mass grouped by the bits each hash shows at `index_set`.
///
/// Keys are the hash restricted to the mask (other positions zeroed).
pub fn aggregate_by_pattern(dist: &HashDistribution, index_set: &IndexSet) -> HashMap<PerceptualHash, f64> {
    let mask = index_set.mask();
    let mut groups: HashMap<PerceptualHash, f64> = HashMap::new();
    for (v, &m) in dist.support().iter().zip(dist.masses()) {
        let key = masked(v, &mask);
        *groups.entry(key).or_default() += m;
    }
    groups
}

fn masked(v: &PerceptualHash, mask: &PerceptualHash) -> PerceptualHash {
    let w = v.words();
    let m = mask.words();
    PerceptualHash::from_words([w[0] & m[0], w[1] & m[1], w[2] & m[2], w[3] & m[3]])
}

fn pattern_code(bits: &[bool]) -> usize {
    bits.iter().enumerate().fold(0, |acc, (j, &b)| acc | (usize::from(b) << j))
}

/// Posterior evaluator for requests that all share one index set, as in a
/// simulation where the index set is fixed per iteration.
pub struct FixedIndexPosterior {
    index_set: IndexSet,
    mask: PerceptualHash,
    weights: LogWeights,
    /// Restricted target pattern and the target's own mass.
    target: Option<(PerceptualHash, f64)>,
    groups: Vec<(PerceptualHash, f64)>,
    /// Posterior for every possible single request, indexed by [`pattern_code`].
    table: Option<Vec<f64>>,
}

impl FixedIndexPosterior {
    pub fn new(index_set: IndexSet, target: &PerceptualHash, dist: &HashDistribution, gamma: f64) -> Result<Self> {
        if dist.is_empty() {
            return Err(Error::EmptySupport);
        }
        let weights = LogWeights::new(gamma)?;
        let mask = index_set.mask();
        let target_mass = dist.mass(target);
        let target = (target_mass > 0.0).then(|| (masked(target, &mask), target_mass));
        let mut groups: Vec<(PerceptualHash, f64)> = aggregate_by_pattern(dist, &index_set).into_iter().collect();
        groups.sort_by_key(|g| g.0);

        let d = index_set.len();
        // the dense table multiplies d per-bit factors; keep it where that cannot underflow
        let table_ok = d <= TABLE_MAX_D && (gamma == 0.0 || d as f64 * gamma.ln() > -600.0);
        let mut out = Self { index_set, mask, weights, target, groups, table: None };
        if table_ok {
            out.table = Some(out.dense_table(gamma));
        }
        Ok(out)
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    fn dense_table(&self, gamma: f64) -> Vec<f64> {
        let d = self.index_set.len();
        let size = 1usize << d;
        let mut evidence = vec![0.0f64; size];
        for (key, m) in &self.groups {
            evidence[pattern_code(&self.index_set.restrict(key))] += m;
        }
        // evidence[x] becomes sum_y agg[y] * prod_b (gamma if x_b != y_b else 1 - gamma)
        if gamma > 0.0 {
            for b in 0..d {
                let bit = 1usize << b;
                for x in 0..size {
                    if x & bit == 0 {
                        let (a, c) = (evidence[x], evidence[x | bit]);
                        evidence[x] = (1.0 - gamma) * a + gamma * c;
                        evidence[x | bit] = gamma * a + (1.0 - gamma) * c;
                    }
                }
            }
        }
        let Some((key, mass)) = self.target else {
            return vec![0.0; size];
        };
        let t = pattern_code(&self.index_set.restrict(&key));
        (0..size)
            .map(|x| {
                let delta = (x ^ t).count_ones();
                let num = self.weights.log_likelihood(delta, d as u32).exp() * mass;
                if num == 0.0 || evidence[x] == 0.0 {
                    0.0
                } else {
                    (num / evidence[x]).min(1.0)
                }
            })
            .collect()
    }

    /// Posterior for one request whose bits were read at this index set.
    pub fn score(&self, bits: &[bool]) -> f64 {
        debug_assert_eq!(bits.len(), self.index_set.len());
        match &self.table {
            Some(table) => table[pattern_code(bits)],
            None => self.score_repeated(std::slice::from_ref(&bits.to_vec())),
        }
    }

    /// Posterior for several requests sharing this index set, each with fresh flip coins.
    pub fn score_repeated(&self, requests: &[Vec<bool>]) -> f64 {
        let Some((target_key, target_mass)) = self.target else {
            return 0.0;
        };
        let patterns: Vec<PerceptualHash> = requests
            .iter()
            .map(|bits| {
                let mut p = PerceptualHash::ZERO;
                for (&i, &b) in self.index_set.indices().iter().zip(bits) {
                    p.set_bit(usize::from(i), b);
                }
                p
            })
            .collect();
        let total = (self.index_set.len() * requests.len()) as u32;
        let log_like = |key: &PerceptualHash| {
            let delta: u32 = patterns.iter().map(|p| key.masked_distance(p, &self.mask)).sum();
            self.weights.log_likelihood(delta, total)
        };
        let numerator = log_like(&target_key) + target_mass.ln();
        normalized(numerator, self.groups.iter().map(|(k, m)| log_like(k) + m.ln()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{emb_lsh, embed_with_index_set, sample_index_set, EmbeddingParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn h8(v: u64) -> PerceptualHash {
        PerceptualHash::from_low_bits(v, 8)
    }

    /// Bayes rule evaluated directly in linear space over every 8-bit hash.
    fn oracle(reqs: &[CoarseEmbedding], target: u64, probs: &[f64; 256], gamma: f64) -> f64 {
        let like = |v: u64| -> f64 {
            reqs.iter()
                .map(|r| {
                    r.index_set
                        .indices()
                        .iter()
                        .zip(&r.bits)
                        .map(|(&i, &b)| {
                            let bit = (v >> (7 - i)) & 1 == 1;
                            if bit == b { 1.0 - gamma } else { gamma }
                        })
                        .product::<f64>()
                })
                .product()
        };
        let num = like(target) * probs[target as usize];
        let den: f64 = (0..256u64).map(|v| like(v) * probs[v as usize]).sum();
        if den == 0.0 { 0.0 } else { num / den }
    }

    #[test]
    fn vector_form_matches_per_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let support: Vec<_> = (0..300).map(|_| PerceptualHash::from_words(rng.random())).collect();
        let dist = HashDistribution::from_weights(support.iter().map(|h| (*h, rng.random_range(0.1..1.0)))).unwrap();
        let params = EmbeddingParams::new(12, 0.1, 0).unwrap();
        let reqs: Vec<_> = (0..2).map(|_| emb_lsh(&support[5], &params, &mut rng)).collect();
        let all = posterior_all(&reqs, &dist, 0.1).unwrap();
        assert!((all.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (h, p) in support.iter().zip(&all) {
            assert_eq!(*p, posterior_repeated(&reqs, h, &dist, 0.1).unwrap());
        }
    }

    fn random_probs(rng: &mut impl Rng) -> [f64; 256] {
        let mut p = [0.0; 256];
        for x in p.iter_mut() {
            *x = rng.random_range(0.01..1.0);
        }
        let s: f64 = p.iter().sum();
        p.map(|x| x / s)
    }

    fn full_dist(probs: &[f64; 256]) -> HashDistribution {
        HashDistribution::from_weights((0..256u64).map(|v| (h8(v), probs[v as usize]))).unwrap()
    }

    #[test]
    fn two_point_examples() {
        let dist = HashDistribution::from_weights([(h8(0b0000_0000), 0.5), (h8(0b1111_0000), 0.5)]).unwrap();
        let req = CoarseEmbedding::new(IndexSet::new(vec![0, 1], 8).unwrap(), vec![false, false]).unwrap();
        assert_eq!(posterior_single(&req, &h8(0), &dist, 0.0).unwrap(), 1.0);
        let p = posterior_single(&req, &h8(0), &dist, 0.25).unwrap();
        assert!((p - 0.9).abs() < 1e-12, "{p}");
        assert_eq!(posterior_single(&req, &h8(3), &dist, 0.25).unwrap(), 0.0);
        assert!(posterior_single(&req, &h8(0), &dist, 0.5).is_err());
    }

    #[test]
    fn matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let probs = random_probs(&mut rng);
            let dist = full_dist(&probs);
            let gamma = rng.random_range(0.0..0.45);
            let d = rng.random_range(1..=8);
            let p = EmbeddingParams::new(d, gamma, 0).unwrap().with_ell(8).unwrap();
            let req = emb_lsh(&h8(rng.random_range(0..256)), &p, &mut rng);
            let t = rng.random_range(0..256);
            let got = posterior_single(&req, &h8(t), &dist, gamma).unwrap();
            assert!((got - oracle(&[req], t, &probs, gamma)).abs() < 1e-12);
        }
    }

    #[test]
    fn twenty_hash_support_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut probs = [0.0; 256];
        let mut chosen = Vec::new();
        while chosen.len() < 20 {
            let v = rng.random_range(0..256u64);
            if !chosen.contains(&v) {
                chosen.push(v);
                probs[v as usize] = rng.random_range(0.1..1.0);
            }
        }
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= s);
        let dist = HashDistribution::from_weights(chosen.iter().map(|&v| (h8(v), probs[v as usize]))).unwrap();
        let p = EmbeddingParams::new(5, 0.1, 0).unwrap().with_ell(8).unwrap();
        for _ in 0..100 {
            let req = emb_lsh(&h8(chosen[rng.random_range(0..20)]), &p, &mut rng);
            for &t in &chosen {
                let got = posterior_single(&req, &h8(t), &dist, 0.1).unwrap();
                assert!((got - oracle(std::slice::from_ref(&req), t, &probs, 0.1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalizes_over_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let support: Vec<_> = (0..500).map(|_| PerceptualHash::from_words(rng.random())).collect();
        let dist = HashDistribution::from_weights(support.iter().map(|&h| (h, rng.random_range(1.0..5.0)))).unwrap();
        let p = EmbeddingParams::new(12, 0.05, 0).unwrap();
        for _ in 0..20 {
            let req = emb_lsh(&support[rng.random_range(0..500)], &p, &mut rng);
            let total: f64 = support.iter().map(|t| posterior_single(&req, t, &dist, 0.05).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn repeated_reduces_to_single_and_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let probs = random_probs(&mut rng);
        let dist = full_dist(&probs);
        let p = EmbeddingParams::new(3, 0.2, 0).unwrap().with_ell(8).unwrap();
        for q in 1..=3 {
            for _ in 0..50 {
                let v = h8(rng.random_range(0..256));
                let reqs: Vec<_> = (0..q).map(|_| emb_lsh(&v, &p, &mut rng)).collect();
                let t = rng.random_range(0..256);
                let got = posterior_repeated(&reqs, &h8(t), &dist, 0.2).unwrap();
                assert!((got - oracle(&reqs, t, &probs, 0.2)).abs() < 1e-12);
                if q == 1 {
                    assert_eq!(got, posterior_single(&reqs[0], &h8(t), &dist, 0.2).unwrap());
                }
            }
        }
        assert!(posterior_repeated(&[], &h8(0), &dist, 0.1).is_err());
    }

    #[test]
    fn noiseless_repeats_act_like_the_union_of_indices() {
        let dist = HashDistribution::from_weights([(h8(0b1010_0000), 0.3), (h8(0b1000_0000), 0.7)]).unwrap();
        let target = h8(0b1010_0000);
        let a = CoarseEmbedding::new(IndexSet::new(vec![0, 1], 8).unwrap(), vec![true, false]).unwrap();
        let b = CoarseEmbedding::new(IndexSet::new(vec![2, 3], 8).unwrap(), vec![true, false]).unwrap();
        let union = CoarseEmbedding::new(IndexSet::new(vec![0, 1, 2, 3], 8).unwrap(), vec![true, false, true, false])
            .unwrap();
        // the first request cannot tell the two apart, the union can
        assert!((posterior_single(&a, &target, &dist, 0.0).unwrap() - 0.3).abs() < 1e-12);
        let both = posterior_repeated(&[a, b], &target, &dist, 0.0).unwrap();
        assert_eq!(both, posterior_single(&union, &target, &dist, 0.0).unwrap());
        assert_eq!(both, 1.0);
    }

    #[test]
    fn repeated_fresh_coins_concentrate() {
        // fixed positions, fresh flips: more looks at the same bits sharpen the posterior
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probs = random_probs(&mut rng);
        let dist = full_dist(&probs);
        let set = IndexSet::new(vec![0, 2, 4, 6], 8).unwrap();
        let truth = h8(0b1100_1010);
        let mut mean = [0.0; 2];
        for _ in 0..400 {
            let reqs: Vec<_> = (0..5).map(|_| embed_with_index_set(&truth, set.clone(), 0.1, &mut rng)).collect();
            mean[0] += posterior_repeated(&reqs[..1], &truth, &dist, 0.1).unwrap();
            mean[1] += posterior_repeated(&reqs, &truth, &dist, 0.1).unwrap();
            assert!((posterior_repeated(&reqs, &truth, &dist, 0.1).unwrap() - oracle(&reqs, 0b1100_1010, &probs, 0.1)).abs() < 1e-12);
        }
        assert!(mean[1] > mean[0]);
    }

    #[test]
    fn fixed_index_paths_agree_with_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let support: Vec<_> = (0..300).map(|_| PerceptualHash::from_words(rng.random())).collect();
        let dist = HashDistribution::from_weights(support.iter().map(|&h| (h, rng.random_range(1.0..5.0)))).unwrap();
        for (d, gamma) in [(9, 0.05), (9, 0.0), (16, 0.2), (24, 0.05), (40, 0.0)] {
            let set = sample_index_set(256, d, &mut rng).unwrap();
            let target = support[rng.random_range(0..300)];
            let scorer = FixedIndexPosterior::new(set.clone(), &target, &dist, gamma).unwrap();
            for _ in 0..50 {
                let v = support[rng.random_range(0..300)];
                let req = embed_with_index_set(&v, set.clone(), gamma, &mut rng);
                let direct = posterior_single(&req, &target, &dist, gamma).unwrap();
                let fast = scorer.score(&req.bits);
                assert!((direct - fast).abs() < 1e-12, "d={d} gamma={gamma}: {direct} vs {fast}");
                let again = embed_with_index_set(&v, set.clone(), gamma, &mut rng);
                let pair = [req.bits.clone(), again.bits.clone()];
                let direct2 = posterior_repeated(&[req, again], &target, &dist, gamma).unwrap();
                assert!((direct2 - scorer.score_repeated(&pair)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_information_is_monotone_in_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let support: Vec<_> = (0..200).map(|_| PerceptualHash::from_low_bits(rng.random_range(0..1 << 12), 12)).collect();
        let dist = HashDistribution::uniform(support.clone()).unwrap();
        for _ in 0..50 {
            let truth = support[rng.random_range(0..support.len())];
            let order = sample_index_set(12, 12, &mut rng).unwrap();
            let mut prev = 0.0;
            for d in 1..=12 {
                let set = IndexSet::new(order.indices()[..d].to_vec(), 12).unwrap();
                let req = embed_with_index_set(&truth, set, 0.0, &mut rng);
                let p = posterior_single(&req, &truth, &dist, 0.0).unwrap();
                assert!(p >= prev - 1e-15);
                prev = p;
            }
        }
    }
}
