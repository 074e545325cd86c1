//! Workload records and the hash distribution a workload induces.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::PerceptualHash;
use crate::error::{Error, Result};

/// One distinct hash in a request stream and how often it was requested.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadRecord {
    pub hash: PerceptualHash,
    pub count: u64,
}

/// Probability mass over a finite set of distinct hashes.
#[derive(Clone, Debug)]
pub struct HashDistribution {
    support: Vec<PerceptualHash>,
    mass: Vec<f64>,
    index: HashMap<PerceptualHash, usize>,
    sampler: WeightedIndex<f64>,
}

impl HashDistribution {
    /// Builds a distribution from positive weights; repeated hashes are merged.
    pub fn from_weights(weights: impl IntoIterator<Item = (PerceptualHash, f64)>) -> Result<Self> {
        let mut support = Vec::new();
        let mut raw = Vec::new();
        let mut index = HashMap::new();
        for (h, w) in weights {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidParams(format!("weight {w} for {h} is not positive")));
            }
            match index.get(&h) {
                Some(&i) => raw[i] += w,
                None => {
                    index.insert(h, support.len());
                    support.push(h);
                    raw.push(w);
                }
            }
        }
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        let total: f64 = raw.iter().sum();
        let mass: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let sampler = WeightedIndex::new(&mass).map_err(|e| Error::InvalidParams(e.to_string()))?;
        Ok(Self { support, mass, index, sampler })
    }

    pub fn uniform(support: Vec<PerceptualHash>) -> Result<Self> {
        Self::from_weights(support.into_iter().map(|h| (h, 1.0)))
    }

    pub fn support(&self) -> &[PerceptualHash] {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Probability of `h`; zero outside the support.
    pub fn mass(&self, h: &PerceptualHash) -> f64 {
        self.index.get(h).map_or(0.0, |&i| self.mass[i])
    }

    pub fn position(&self, h: &PerceptualHash) -> Option<usize> {
        self.index.get(h).copied()
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PerceptualHash {
        self.support[self.sample_index(rng)]
    }

    /// Support hashes ordered by decreasing mass; ties keep support order.
    pub fn by_popularity(&self) -> Vec<PerceptualHash> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.mass[b].total_cmp(&self.mass[a]).then(a.cmp(&b)));
        order.into_iter().map(|i| self.support[i]).collect()
    }
}

/// Normalizes request counts into a distribution over distinct hashes.
pub fn induced_distribution(workload: &[WorkloadRecord]) -> Result<HashDistribution> {
    if workload.is_empty() {
        return Err(Error::Empty("workload"));
    }
    if let Some(r) = workload.iter().find(|r| r.count == 0) {
        return Err(Error::InvalidParams(format!("zero count for {}", r.hash)));
    }
    HashDistribution::from_weights(workload.iter().map(|r| (r.hash, r.count as f64)))
}
