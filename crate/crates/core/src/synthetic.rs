//! Clustered synthetic workloads and databases.
//!
//! Cluster centers are uniform 256-bit strings; each member is its center
//! XOR an error pattern of weight at most `cluster_radius`. Requests follow a
//! Zipf law over members in a random popularity order.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::bits::{PerceptualHash, HASH_BITS};
use crate::distribution::WorkloadRecord;
use crate::error::{Error, Result};
use crate::seed::derived_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_clusters: usize,
    /// Largest error weight applied to a center.
    pub cluster_radius: u32,
    /// Inclusive `[min, max]`; each cluster draws its size uniformly.
    pub members_per_cluster: [usize; 2],
    pub zipf_exponent: f64,
    /// Number of simulated client requests.
    pub requests: u64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_clusters: 2000,
            cluster_radius: 8,
            members_per_cluster: [1, 12],
            zipf_exponent: 1.1,
            requests: 200_000,
            seed: 0x5bb_2023,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.members_per_cluster;
        if self.num_clusters == 0 || lo == 0 || lo > hi {
            return Err(Error::InvalidParams("need at least one cluster and 1 <= min <= max members".into()));
        }
        if self.cluster_radius as usize >= HASH_BITS / 2 {
            return Err(Error::InvalidParams(format!("cluster radius {} must be below 128", self.cluster_radius)));
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::InvalidParams(format!("zipf exponent {} must be positive", self.zipf_exponent)));
        }
        if self.requests == 0 {
            return Err(Error::InvalidParams("request count must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    /// Distinct requested hashes with their counts; members nobody requested are omitted.
    pub workload: Vec<WorkloadRecord>,
    /// Every distinct member hash.
    pub database: Vec<PerceptualHash>,
    /// Cluster index of each database entry.
    pub cluster_of: Vec<usize>,
    pub centers: Vec<PerceptualHash>,
}

pub fn random_hash<R: Rng + ?Sized>(rng: &mut R) -> PerceptualHash {
    PerceptualHash::from_words(rng.random())
}

/// `center` with `weight` distinct uniformly chosen bits flipped.
pub fn perturb<R: Rng + ?Sized>(center: &PerceptualHash, weight: u32, rng: &mut R) -> PerceptualHash {
    let mut out = *center;
    for i in rand::seq::index::sample(rng, HASH_BITS, weight as usize) {
        out.flip_bit(i);
    }
    out
}

fn cluster_members(
    rng: &mut ChaCha8Rng,
    center: &PerceptualHash,
    config: &SyntheticConfig,
    seen: &mut HashSet<PerceptualHash>,
) -> Vec<PerceptualHash> {
    let [lo, hi] = config.members_per_cluster;
    let n = rng.random_range(lo..=hi);
    (0..n)
        .map(|_| perturb(center, rng.random_range(0..=config.cluster_radius), rng))
        .filter(|m| seen.insert(*m))
        .collect()
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = derived_rng(config.seed, "synthetic/clusters");
    let mut seen = HashSet::new();
    let mut database = Vec::new();
    let mut cluster_of = Vec::new();
    let mut centers = Vec::with_capacity(config.num_clusters);
    for c in 0..config.num_clusters {
        let center = random_hash(&mut rng);
        centers.push(center);
        for m in cluster_members(&mut rng, &center, config, &mut seen) {
            database.push(m);
            cluster_of.push(c);
        }
    }

    let mut rng = derived_rng(config.seed, "synthetic/requests");
    let mut popularity: Vec<usize> = (0..database.len()).collect();
    popularity.shuffle(&mut rng);
    let zipf = Zipf::new(database.len() as f64, config.zipf_exponent)
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    let mut counts: HashMap<usize, u64> = HashMap::new();
    for _ in 0..config.requests {
        let rank = zipf.sample(&mut rng) as usize - 1;
        *counts.entry(popularity[rank]).or_default() += 1;
    }
    let workload = (0..database.len())
        .filter_map(|i| counts.get(&i).map(|&count| WorkloadRecord { hash: database[i], count }))
        .collect();
    Ok(SyntheticData { workload, database, cluster_of, centers })
}

/// Exactly `size` distinct clustered hashes, generated with the cluster shape
/// of `config` (its cluster count is ignored).
pub fn generate_database(config: &SyntheticConfig, size: usize) -> Result<Vec<PerceptualHash>> {
    config.validate()?;
    let mut rng = derived_rng(config.seed, "synthetic/database");
    let mut seen = HashSet::with_capacity(size);
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let center = random_hash(&mut rng);
        out.extend(cluster_members(&mut rng, &center, config, &mut seen));
    }
    out.truncate(size);
    Ok(out)
}
