//! Matching-attack simulation: draw requests from a workload, embed them, and
//! score each with the Bayes posterior for a fixed target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::PerceptualHash;
use crate::distribution::{HashDistribution, WorkloadRecord};
use crate::embedding::{
    embed_with_index_set, emb_lsh, sample_index_set, CoarseEmbedding, DeterministicEmbedder, EmbeddingParams,
};
use crate::error::{Error, Result};
use crate::metrics::ScoredRequest;
use crate::posterior::{posterior_repeated, FixedIndexPosterior};

const CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepetitionMode {
    /// Every embedding draws fresh positions and fresh flip coins.
    Independent,
    /// All embeddings share the batch index set; flip coins are fresh.
    FixedIndex,
    /// Positions and coins derive from a keyed PRF, so repeats are identical.
    Deterministic,
}

impl std::str::FromStr for RepetitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Self::Independent),
            "fixed-index" => Ok(Self::FixedIndex),
            "deterministic" => Ok(Self::Deterministic),
            other => Err(Error::InvalidParams(format!("unknown repetition mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionConfig {
    pub q: usize,
    pub mode: RepetitionMode,
}

impl RepetitionConfig {
    pub fn single() -> Self {
        Self { q: 1, mode: RepetitionMode::FixedIndex }
    }

    pub fn new(q: usize, mode: RepetitionMode) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidParams("repetition count must be at least 1".into()));
        }
        Ok(Self { q, mode })
    }
}

impl Default for RepetitionConfig {
    fn default() -> Self {
        Self::single()
    }
}

/// The adversary's target hash and the prior it believes requests follow.
#[derive(Clone, Debug)]
pub struct MatchingSetting {
    pub target: PerceptualHash,
    pub distribution: HashDistribution,
}

/// One simulated request with everything the adversary saw.
#[derive(Clone, Debug)]
pub struct SimulatedRequest {
    pub hash: PerceptualHash,
    pub embeddings: Vec<CoarseEmbedding>,
    pub scored: ScoredRequest,
}

/// Simulates `trials` requests drawn from `workload`.
///
/// A single index set is drawn per call and reused for every request in the
/// independent (q = 1) and fixed-index modes. Output order follows `rng`
/// deterministically regardless of thread count.
pub fn run_matching_simulation_detailed<R: Rng + ?Sized>(
    workload: &HashDistribution,
    setting: &MatchingSetting,
    params: &EmbeddingParams,
    rep: RepetitionConfig,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<SimulatedRequest>> {
    params.validate()?;
    if rep.q == 0 {
        return Err(Error::InvalidParams("repetition count must be at least 1".into()));
    }
    if workload.is_empty() || setting.distribution.is_empty() {
        return Err(Error::EmptySupport);
    }
    let batch_index = sample_index_set(params.ell, params.d, rng)?;
    let fixed = FixedIndexPosterior::new(batch_index.clone(), &setting.target, &setting.distribution, params.gamma)?;
    let embedder = DeterministicEmbedder::from_rng(rng);
    let seed: [u8; 32] = rng.random();

    let chunks = trials.div_ceil(CHUNK);
    let out: Result<Vec<Vec<SimulatedRequest>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::from_seed(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(trials - c * CHUNK);
            (0..n)
                .map(|_| {
                    let hash = workload.sample(&mut rng);
                    let (embeddings, score) = match rep.mode {
                        RepetitionMode::Independent if rep.q > 1 => {
                            let e: Vec<_> = (0..rep.q).map(|_| emb_lsh(&hash, params, &mut rng)).collect();
                            let s = posterior_repeated(&e, &setting.target, &setting.distribution, params.gamma)?;
                            (e, s)
                        }
                        RepetitionMode::Independent | RepetitionMode::FixedIndex => {
                            let e: Vec<_> = (0..rep.q)
                                .map(|_| embed_with_index_set(&hash, batch_index.clone(), params.gamma, &mut rng))
                                .collect();
                            let s = if rep.q == 1 {
                                fixed.score(&e[0].bits)
                            } else {
                                let bits: Vec<Vec<bool>> = e.iter().map(|x| x.bits.clone()).collect();
                                fixed.score_repeated(&bits)
                            };
                            (e, s)
                        }
                        RepetitionMode::Deterministic => {
                            // identical repeats carry no more than one request's worth
                            let one = embedder.embed(&hash, params);
                            let s = posterior_repeated(
                                std::slice::from_ref(&one),
                                &setting.target,
                                &setting.distribution,
                                params.gamma,
                            )?;
                            (vec![one; rep.q], s)
                        }
                    };
                    Ok(SimulatedRequest { hash, embeddings, scored: ScoredRequest::new(score, hash == setting.target) })
                })
                .collect()
        })
        .collect();
    Ok(out?.into_iter().flatten().collect())
}

/// Score/label pairs for `trials` simulated requests.
pub fn run_matching_simulation<R: Rng + ?Sized>(
    workload: &HashDistribution,
    setting: &MatchingSetting,
    params: &EmbeddingParams,
    rep: RepetitionConfig,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<ScoredRequest>> {
    Ok(run_matching_simulation_detailed(workload, setting, params, rep, trials, rng)?
        .into_iter()
        .map(|r| r.scored)
        .collect())
}

/// Request mass binned by T-neighborhood size: `[1, (1,10], (10,100], >100]`.
///
/// A request's neighborhood counts every request in the workload (itself
/// included) whose hash lies at distance below `t`; a threshold of zero is
/// treated as one.
pub fn neighborhood_distribution(workload: &[WorkloadRecord], t: u32) -> Result<[f64; 4]> {
    if workload.is_empty() {
        return Err(Error::Empty("workload"));
    }
    let t = t.max(1);
    let total: u64 = workload.iter().map(|r| r.count).sum();
    if total == 0 {
        return Err(Error::InvalidParams("workload has no requests".into()));
    }
    let bins = workload
        .par_iter()
        .map(|r| {
            let size: u64 = workload.iter().filter(|o| r.hash.distance(&o.hash) < t).map(|o| o.count).sum();
            let mut b = [0.0; 4];
            b[neighborhood_bin(size)] = r.count as f64;
            b
        })
        .reduce(|| [0.0; 4], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]);
    Ok(bins.map(|b| b / total as f64))
}

pub fn neighborhood_bin(size: u64) -> usize {
    match size {
        0 | 1 => 0,
        2..=10 => 1,
        11..=100 => 2,
        _ => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::precision_at_recall;
    use crate::posterior::posterior_single;

    fn h8(v: u64) -> PerceptualHash {
        PerceptualHash::from_low_bits(v, 8)
    }

    fn setting(dist: &HashDistribution, target: PerceptualHash) -> MatchingSetting {
        MatchingSetting { target, distribution: dist.clone() }
    }

    #[test]
    fn absent_target_gives_no_positives() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dist = HashDistribution::uniform((0..20).map(h8).collect()).unwrap();
        let s = setting(&dist, h8(200));
        let p = EmbeddingParams::new(4, 0.1, 1).unwrap().with_ell(8).unwrap();
        let out = run_matching_simulation(&dist, &s, &p, RepetitionConfig::single(), 500, &mut rng).unwrap();
        assert_eq!(out.len(), 500);
        assert!(out.iter().all(|r| !r.label && r.score == 0.0));
    }

    #[test]
    fn full_information_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let support: Vec<_> = (0..40).map(|_| PerceptualHash::from_words(rng.random())).collect();
        let dist = HashDistribution::uniform(support.clone()).unwrap();
        let s = setting(&dist, support[3]);
        let p = EmbeddingParams::new(256, 0.0, 0).unwrap();
        let out = run_matching_simulation(&dist, &s, &p, RepetitionConfig::single(), 2000, &mut rng).unwrap();
        assert!(out.iter().any(|r| r.label));
        for r in out {
            assert_eq!(r.score, if r.label { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn matches_oracle_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let support: Vec<_> = (0..30).map(|_| h8(rng.random_range(0..256))).collect();
        let dist = HashDistribution::from_weights(support.iter().map(|&h| (h, rng.random_range(1.0..5.0)))).unwrap();
        let target = dist.by_popularity()[0];
        let s = setting(&dist, target);
        let p = EmbeddingParams::new(5, 0.15, 2).unwrap().with_ell(8).unwrap();
        for rep in [
            RepetitionConfig::single(),
            RepetitionConfig::new(3, RepetitionMode::Independent).unwrap(),
            RepetitionConfig::new(3, RepetitionMode::FixedIndex).unwrap(),
            RepetitionConfig::new(2, RepetitionMode::Deterministic).unwrap(),
        ] {
            let out = run_matching_simulation_detailed(&dist, &s, &p, rep, 3000, &mut rng).unwrap();
            for r in &out {
                assert_eq!(r.scored.label, r.hash == target);
                assert_eq!(r.embeddings.len(), rep.q);
                let used = if rep.mode == RepetitionMode::Deterministic { &r.embeddings[..1] } else { &r.embeddings[..] };
                let direct = posterior_repeated(used, &target, &dist, p.gamma).unwrap();
                assert!((r.scored.score - direct).abs() < 1e-12, "{rep:?}");
            }
        }
    }

    #[test]
    fn deterministic_repeats_are_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dist = HashDistribution::uniform((0..64).map(h8).collect()).unwrap();
        let s = setting(&dist, h8(5));
        let p = EmbeddingParams::new(4, 0.2, 1).unwrap().with_ell(8).unwrap();
        let rep = RepetitionConfig::new(5, RepetitionMode::Deterministic).unwrap();
        let out = run_matching_simulation_detailed(&dist, &s, &p, rep, 500, &mut rng).unwrap();
        for r in out {
            assert!(r.embeddings.iter().all(|e| *e == r.embeddings[0]));
            let single = posterior_single(&r.embeddings[0], &h8(5), &dist, p.gamma).unwrap();
            assert_eq!(r.scored.score, single);
        }
    }

    #[test]
    fn seeded_runs_reproduce() {
        let dist = HashDistribution::uniform((0..100).map(h8).collect()).unwrap();
        let s = setting(&dist, h8(7));
        let p = EmbeddingParams::new(6, 0.05, 2).unwrap().with_ell(8).unwrap();
        let run = || {
            run_matching_simulation(&dist, &s, &p, RepetitionConfig::single(), 5000, &mut ChaCha8Rng::seed_from_u64(9))
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_flip_precision_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let support: Vec<_> = (0..300).map(|_| PerceptualHash::from_words(rng.random())).collect();
        let dist = HashDistribution::from_weights(support.iter().enumerate().map(|(i, &h)| (h, 1.0 / (i + 1) as f64)))
            .unwrap();
        let s = setting(&dist, support[0]);
        let p = EmbeddingParams::new(6, 0.0, 1).unwrap();
        let out = run_matching_simulation(&dist, &s, &p, RepetitionConfig::single(), 20_000, &mut rng).unwrap();
        let first = precision_at_recall(&out, 0.0).unwrap().precision;
        for rho in [0.25, 0.5, 0.75, 1.0] {
            assert_eq!(precision_at_recall(&out, rho).unwrap().precision, first);
        }
    }

    #[test]
    fn repetition_validation() {
        assert!(RepetitionConfig::new(0, RepetitionMode::Independent).is_err());
        assert_eq!("fixed-index".parse::<RepetitionMode>().unwrap(), RepetitionMode::FixedIndex);
        assert!("other".parse::<RepetitionMode>().is_err());
    }

    fn rec(hash: PerceptualHash, count: u64) -> WorkloadRecord {
        WorkloadRecord { hash, count }
    }

    #[test]
    fn neighborhood_extremes() {
        let same = vec![rec(h8(3), 1); 150];
        assert_eq!(neighborhood_distribution(&same, 8).unwrap(), [0.0, 0.0, 0.0, 1.0]);
        let far = vec![rec(PerceptualHash::ZERO, 1), rec(!PerceptualHash::ZERO, 1)];
        assert_eq!(neighborhood_distribution(&far, 1).unwrap(), [1.0, 0.0, 0.0, 0.0]);
        assert!(neighborhood_distribution(&[], 1).is_err());
    }

    #[test]
    fn neighborhood_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let center = PerceptualHash::from_words(rng.random());
        let workload: Vec<_> = (0..30)
            .map(|_| {
                let mut h = center;
                for _ in 0..rng.random_range(0..20) {
                    h.flip_bit(rng.random_range(0..256));
                }
                rec(h, rng.random_range(1..8))
            })
            .collect();
        for t in [1, 8, 16, 32] {
            // expand every record into individual requests
            let requests: Vec<PerceptualHash> =
                workload.iter().flat_map(|r| std::iter::repeat_n(r.hash, r.count as usize)).collect();
            let mut expect = [0.0; 4];
            for a in &requests {
                let n = requests.iter().filter(|b| a.distance(b) < t).count();
                let bin = if n <= 1 { 0 } else if n <= 10 { 1 } else if n <= 100 { 2 } else { 3 };
                expect[bin] += 1.0 / requests.len() as f64;
            }
            let got = neighborhood_distribution(&workload, t).unwrap();
            for (g, e) in got.iter().zip(expect) {
                assert!((g - e).abs() < 1e-12);
            }
        }
    }
}
