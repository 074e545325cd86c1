//! Noisy LSH coarse embeddings and the server-side bucket filters.
//!
//! A coarse embedding reveals `d` sampled positions of a hash, each bit
//! independently flipped with probability `gamma`. The server returns every
//! database hash whose bits at those positions lie within Hamming distance `k`
//! of the revealed bits.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::{PerceptualHash, HASH_BITS};
use crate::error::{Error, Result};
use crate::pdq::CoarsePdqHash;

/// Database size above which bucket scans run on the rayon pool.
const PARALLEL_SCAN_MIN: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    /// Number of revealed positions.
    pub d: usize,
    /// Per-bit flip probability, in `[0, 0.5)`.
    pub gamma: f64,
    /// Inclusive bucket threshold on the restricted distance.
    pub k: usize,
    /// Length of the hash space positions are drawn from.
    pub ell: usize,
}

impl EmbeddingParams {
    pub fn new(d: usize, gamma: f64, k: usize) -> Result<Self> {
        let p = Self { d, gamma, k, ell: HASH_BITS };
        p.validate()?;
        Ok(p)
    }

    pub fn with_ell(mut self, ell: usize) -> Result<Self> {
        self.ell = ell;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 || self.ell > HASH_BITS {
            return Err(Error::InvalidParams(format!("ell = {} outside 1..={HASH_BITS}", self.ell)));
        }
        if self.d == 0 || self.d > self.ell {
            return Err(Error::InvalidParams(format!("d = {} outside 1..={}", self.d, self.ell)));
        }
        if !(0.0..0.5).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!("gamma = {} outside [0, 0.5)", self.gamma)));
        }
        if self.k > self.d {
            return Err(Error::InvalidParams(format!("k = {} exceeds d = {}", self.k, self.d)));
        }
        Ok(())
    }
}

/// Ordered list of distinct bit positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSet(Vec<u16>);

impl IndexSet {
    pub fn new(indices: Vec<u16>, ell: usize) -> Result<Self> {
        let mut seen = [false; HASH_BITS];
        for &i in &indices {
            let i = usize::from(i);
            if i >= ell {
                return Err(Error::InvalidParams(format!("index {i} out of range for ell = {ell}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParams(format!("duplicate index {i}")));
            }
        }
        Ok(Self(indices))
    }

    /// All positions `0..ell` in order.
    pub fn full(ell: usize) -> Self {
        Self((0..ell as u16).collect())
    }

    pub fn indices(&self) -> &[u16] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Reads the hash at each position, in index order.
    pub fn restrict(&self, hash: &PerceptualHash) -> Vec<bool> {
        self.0.iter().map(|&i| hash.bit(usize::from(i))).collect()
    }

    /// Hash with ones exactly at the indexed positions.
    pub fn mask(&self) -> PerceptualHash {
        let mut m = PerceptualHash::ZERO;
        for &i in &self.0 {
            m.set_bit(usize::from(i), true);
        }
        m
    }
}

/// Draws `d` distinct positions from `0..ell`, uniformly and in random order.
pub fn sample_index_set<R: Rng + ?Sized>(ell: usize, d: usize, rng: &mut R) -> Result<IndexSet> {
    if d > ell || ell > HASH_BITS {
        return Err(Error::DTooLarge { d, ell });
    }
    let picked = rand::seq::index::sample(rng, ell, d);
    Ok(IndexSet(picked.into_iter().map(|i| i as u16).collect()))
}

/// Negates each bit independently with probability `gamma`.
pub fn flip<R: Rng + ?Sized>(bits: &[bool], gamma: f64, rng: &mut R) -> Vec<bool> {
    if gamma <= 0.0 {
        return bits.to_vec();
    }
    bits.iter().map(|&b| b ^ rng.random_bool(gamma)).collect()
}

/// The client request: sampled positions plus the noisy bits read there.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoarseEmbedding {
    pub index_set: IndexSet,
    pub bits: Vec<bool>,
}

impl CoarseEmbedding {
    pub fn new(index_set: IndexSet, bits: Vec<bool>) -> Result<Self> {
        if index_set.len() != bits.len() {
            return Err(Error::LengthMismatch { left: index_set.len(), right: bits.len() });
        }
        Ok(Self { index_set, bits })
    }

    pub fn d(&self) -> usize {
        self.bits.len()
    }

    /// `(mask, pattern)` such that the restricted distance to `h` is
    /// `h.masked_distance(&pattern, &mask)`.
    pub fn mask_and_pattern(&self) -> (PerceptualHash, PerceptualHash) {
        let mut pattern = PerceptualHash::ZERO;
        for (&i, &b) in self.index_set.indices().iter().zip(&self.bits) {
            pattern.set_bit(usize::from(i), b);
        }
        (self.index_set.mask(), pattern)
    }

    /// Distance between the revealed bits and `hash` restricted to the index set.
    pub fn restricted_distance(&self, hash: &PerceptualHash) -> u32 {
        self.index_set
            .indices()
            .iter()
            .zip(&self.bits)
            .filter(|(&i, &b)| hash.bit(usize::from(i)) != b)
            .count() as u32
    }
}

/// Embeds `hash` with fresh positions and flip coins.
pub fn emb_lsh<R: Rng + ?Sized>(hash: &PerceptualHash, params: &EmbeddingParams, rng: &mut R) -> CoarseEmbedding {
    let index_set = sample_index_set(params.ell, params.d, rng).expect("validated params");
    embed_with_index_set(hash, index_set, params.gamma, rng)
}

/// Embeds `hash` at a caller-chosen index set.
pub fn embed_with_index_set<R: Rng + ?Sized>(
    hash: &PerceptualHash,
    index_set: IndexSet,
    gamma: f64,
    rng: &mut R,
) -> CoarseEmbedding {
    let bits = flip(&index_set.restrict(hash), gamma, rng);
    CoarseEmbedding { index_set, bits }
}

/// Derandomized embedding: positions and flip coins come from a keyed PRF of
/// the hash, so repeated queries for one image produce identical requests.
#[derive(Clone)]
pub struct DeterministicEmbedder {
    key: [u8; 32],
}

impl DeterministicEmbedder {
    pub fn new(key: [u8; 32]) -> Self {
        Self { key }
    }

    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self { key: rng.random() }
    }

    pub fn embed(&self, hash: &PerceptualHash, params: &EmbeddingParams) -> CoarseEmbedding {
        let mut h = Sha256::new();
        h.update(b"sbb-derandomized-embedding/v1");
        h.update(self.key);
        h.update(hash.to_bytes());
        h.update((params.d as u64).to_be_bytes());
        h.update((params.ell as u64).to_be_bytes());
        h.update(params.gamma.to_bits().to_be_bytes());
        let seed: [u8; 32] = h.finalize().into();
        emb_lsh(hash, params, &mut ChaCha8Rng::from_seed(seed))
    }
}

impl std::fmt::Debug for DeterministicEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("DeterministicEmbedder { .. }")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BucketMember {
    /// Position in the scanned database.
    pub position: usize,
    pub hash: PerceptualHash,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bucket {
    pub members: Vec<BucketMember>,
}

impl Bucket {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn hashes(&self) -> impl Iterator<Item = &PerceptualHash> {
        self.members.iter().map(|m| &m.hash)
    }

    pub fn positions(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.position).collect()
    }
}

/// Returns every database hash whose restricted distance to the request is at most `k`,
/// in database order. An empty request matches everything.
pub fn sim_lsh(req: &CoarseEmbedding, db: &[PerceptualHash], k: usize) -> Bucket {
    let (mask, pattern) = req.mask_and_pattern();
    let k = k as u32;
    let keep = |(position, hash): (usize, &PerceptualHash)| {
        (hash.masked_distance(&pattern, &mask) <= k).then_some(BucketMember { position, hash: *hash })
    };
    let members = if db.len() >= PARALLEL_SCAN_MIN {
        db.par_iter().enumerate().filter_map(keep).collect()
    } else {
        db.iter().enumerate().filter_map(keep).collect()
    };
    Bucket { members }
}

/// Count-only variant of [`sim_lsh`].
pub fn sim_lsh_count(req: &CoarseEmbedding, db: &[PerceptualHash], k: usize) -> usize {
    let (mask, pattern) = req.mask_and_pattern();
    let k = k as u32;
    let hit = |h: &PerceptualHash| h.masked_distance(&pattern, &mask) <= k;
    if db.len() >= PARALLEL_SCAN_MIN {
        db.par_iter().filter(|h| hit(h)).count()
    } else {
        db.iter().filter(|h| hit(h)).count()
    }
}

/// A database record for the coarse-PDQ baseline, with its 16-bit hash precomputed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoarseRecord {
    pub hash: PerceptualHash,
    pub coarse: CoarsePdqHash,
}

/// Coarse-PDQ baseline filter: members whose 16-bit hash is strictly closer than `k`.
pub fn sim_cpdq(req: CoarsePdqHash, db: &[CoarseRecord], k: u32) -> Bucket {
    let members = db
        .iter()
        .enumerate()
        .filter(|(_, r)| r.coarse.distance(&req) < k)
        .map(|(position, r)| BucketMember { position, hash: r.hash })
        .collect();
    Bucket { members }
}
