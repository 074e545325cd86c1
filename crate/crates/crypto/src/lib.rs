//! Server-confidential similarity matching over a bucket: a syndrome secure
//! sketch lets the client recover any bucket member close to its hash, and an
//! oblivious PRF lets it test the candidate without learning the others.

pub mod error;
pub mod group;
pub mod oprf;
pub mod sketch;
pub mod sssp;

pub use error::{CryptoError, Result};
pub use group::{PrimeGroup, Ristretto, ToyGroup, ELEMENT_BYTES, SCALAR_BYTES};
pub use oprf::{blind, evaluate, finalize, unblind, OprfKey, OprfOutput};
pub use sketch::{rec, ss, Sketch, SketchCode};
pub use sssp::{run_local, server_evaluate, server_prepare, ClientSession, ServerOffer, SsspVerdict};
