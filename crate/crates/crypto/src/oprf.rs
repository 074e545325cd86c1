//! Blinded-exponentiation OPRF: `F_K(p) = H'(p, H(p)^K)`.
//!
//! The client sends `X = H(p)^tau`, the server answers `Y = X^K`, and the
//! client unblinds with `tau^-1` before hashing.

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{CryptoError, Result};
use crate::group::PrimeGroup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OprfOutput(pub [u8; 32]);

/// The server's PRF key.
pub struct OprfKey<G: PrimeGroup> {
    k: G::Scalar,
}

impl<G: PrimeGroup> Clone for OprfKey<G> {
    fn clone(&self) -> Self {
        Self { k: self.k }
    }
}

impl<G: PrimeGroup> std::fmt::Debug for OprfKey<G> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("OprfKey { .. }")
    }
}

impl<G: PrimeGroup> OprfKey<G> {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self { k: G::random_scalar(rng) }
    }

    pub fn from_scalar(k: G::Scalar) -> Self {
        Self { k }
    }

    pub fn scalar(&self) -> &G::Scalar {
        &self.k
    }

    /// Direct single-party evaluation.
    pub fn evaluate_direct(&self, input: &[u8]) -> OprfOutput {
        finalize::<G>(input, &G::pow(&G::hash_to_group(input), &self.k))
    }
}

pub fn blind<G: PrimeGroup>(input: &[u8], tau: &G::Scalar) -> G::Element {
    G::pow(&G::hash_to_group(input), tau)
}

pub fn evaluate<G: PrimeGroup>(x: &G::Element, key: &OprfKey<G>) -> Result<G::Element> {
    if G::is_identity(x) {
        return Err(CryptoError::InvalidElement);
    }
    Ok(G::pow(x, &key.k))
}

pub fn unblind<G: PrimeGroup>(y: &G::Element, tau: &G::Scalar) -> G::Element {
    G::pow(y, &G::invert(tau))
}

pub fn finalize<G: PrimeGroup>(input: &[u8], y_unblinded: &G::Element) -> OprfOutput {
    let mut h = Sha256::new();
    h.update(b"sbb-oprf-finalize/v1");
    h.update((input.len() as u64).to_be_bytes());
    h.update(input);
    h.update(G::encode(y_unblinded));
    OprfOutput(h.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Ristretto, ToyGroup};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn roundtrip<G: PrimeGroup>(input: &[u8], key: &OprfKey<G>, rng: &mut ChaCha8Rng) -> OprfOutput {
        let tau = G::random_scalar(rng);
        let x = blind::<G>(input, &tau);
        let y = evaluate(&x, key).unwrap();
        finalize::<G>(input, &unblind::<G>(&y, &tau))
    }

    #[test]
    fn trivial_scalars() {
        let x = blind::<Ristretto>(b"p", &Ristretto::one());
        assert_eq!(x, Ristretto::hash_to_group(b"p"));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tau = Ristretto::random_scalar(&mut rng);
        assert_eq!(unblind::<Ristretto>(&blind::<Ristretto>(b"p", &tau), &tau), x);
        let one = OprfKey::<Ristretto>::from_scalar(Ristretto::one());
        assert_eq!(evaluate(&x, &one).unwrap(), x);
    }

    #[test]
    fn protocol_equals_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let key = OprfKey::<Ristretto>::random(&mut rng);
        for i in 0..200u32 {
            let input: [u8; 32] = rng.random();
            let out = roundtrip(&input, &key, &mut rng);
            assert_eq!(out, key.evaluate_direct(&input), "{i}");
            assert_eq!(out, roundtrip(&input, &key, &mut rng));
        }
        assert_ne!(key.evaluate_direct(b"a"), key.evaluate_direct(b"b"));
        let other = OprfKey::<Ristretto>::random(&mut rng);
        assert_ne!(key.evaluate_direct(b"a"), other.evaluate_direct(b"a"));
    }

    #[test]
    fn toy_protocol_equals_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let key = OprfKey::<ToyGroup>::random(&mut rng);
        for v in 0..1000u32 {
            let input = v.to_be_bytes();
            assert_eq!(roundtrip(&input, &key, &mut rng), key.evaluate_direct(&input));
        }
    }

    #[test]
    fn identity_rejected() {
        let key = OprfKey::<ToyGroup>::from_scalar(5);
        assert_eq!(evaluate(&1, &key), Err(CryptoError::InvalidElement));
    }

    #[test]
    fn blinded_element_is_uniform() {
        // for fixed input, H(p)^tau over uniform tau covers the q - 1 non-identity elements evenly
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cells = (ToyGroup::Q - 1) as usize;
        let draws = 100 * cells;
        let mut counts = vec![0u32; ToyGroup::P as usize];
        for _ in 0..draws {
            let tau = ToyGroup::random_scalar(&mut rng);
            counts[blind::<ToyGroup>(b"fixed input", &tau) as usize] += 1;
        }
        let expected = draws as f64 / cells as f64;
        let hit: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| f64::from(c)).collect();
        assert_eq!(hit.len(), cells);
        let stat: f64 = hit.iter().map(|c| (c - expected).powi(2) / expected).sum();
        let critical = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(stat < critical, "{stat} >= {critical}");
    }
}
