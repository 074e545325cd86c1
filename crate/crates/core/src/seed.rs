//! Master-seed fan-out. Child seeds hash the master seed with a label, so
//! adding a component never shifts the randomness another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"sbb-seed/v1");
    h.update(master.to_be_bytes());
    h.update((label.len() as u64).to_be_bytes());
    h.update(label.as_bytes());
    h.finalize().into()
}

pub fn derived_rng(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(master, label))
}
