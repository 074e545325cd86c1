//! Similarity-based bucketization: perceptual hashing, noisy LSH coarse
//! embeddings, and tools for measuring what a bucketizing server can infer.

pub mod analysis;
pub mod bits;
pub mod distribution;
pub mod embedding;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod pdq;
pub mod posterior;
pub mod seed;
pub mod simulation;
pub mod sweep;
pub mod synthetic;

pub use bits::{hamming, hamming_bits, t_similar, PerceptualHash, HASH_BITS, HASH_BYTES};
pub use distribution::{induced_distribution, HashDistribution, WorkloadRecord};
pub use embedding::{
    emb_lsh, flip, sample_index_set, sim_cpdq, sim_lsh, Bucket, BucketMember, CoarseEmbedding, CoarseRecord,
    DeterministicEmbedder, EmbeddingParams, IndexSet,
};
pub use error::{Error, Result};
pub use image::LuminanceImage;
pub use pdq::{compute_coarse_pdq, compute_hash, CoarsePdqHash};
pub use metrics::{accuracy_advantage, auc_advantage, precision_at_recall, ScoredRequest};
pub use posterior::{posterior_all, posterior_repeated, posterior_single, FixedIndexPosterior};
pub use simulation::{
    neighborhood_distribution, run_matching_simulation, MatchingSetting, RepetitionConfig, RepetitionMode,
};
pub use synthetic::{generate_synthetic, SyntheticConfig};
