//! Prime-order groups with hash-to-group, written multiplicatively.

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand::Rng;
use sha2::{Digest, Sha512};

pub const ELEMENT_BYTES: usize = 32;
pub const SCALAR_BYTES: usize = 32;

pub trait PrimeGroup: Send + Sync + 'static {
    type Scalar: Copy + Eq + std::fmt::Debug + Send + Sync;
    type Element: Copy + Eq + std::fmt::Debug + Send + Sync;

    /// Never the identity.
    fn hash_to_group(input: &[u8]) -> Self::Element;
    /// Uniform nonzero scalar.
    fn random_scalar<R: Rng + ?Sized>(rng: &mut R) -> Self::Scalar;
    /// Uniform non-identity element.
    fn random_element<R: Rng + ?Sized>(rng: &mut R) -> Self::Element;
    fn one() -> Self::Scalar;
    fn invert(s: &Self::Scalar) -> Self::Scalar;
    /// `e^s`.
    fn pow(e: &Self::Element, s: &Self::Scalar) -> Self::Element;
    fn is_identity(e: &Self::Element) -> bool;
    fn encode(e: &Self::Element) -> [u8; ELEMENT_BYTES];
    fn decode(bytes: &[u8; ELEMENT_BYTES]) -> Option<Self::Element>;
    fn encode_scalar(s: &Self::Scalar) -> [u8; SCALAR_BYTES];
    /// Canonical nonzero scalars only.
    fn decode_scalar(bytes: &[u8; SCALAR_BYTES]) -> Option<Self::Scalar>;
}

/// The Ristretto group over Curve25519.
#[derive(Clone, Copy, Debug)]
pub struct Ristretto;

impl PrimeGroup for Ristretto {
    type Scalar = Scalar;
    type Element = RistrettoPoint;

    fn hash_to_group(input: &[u8]) -> RistrettoPoint {
        let mut h = Sha512::new();
        h.update(b"sbb-hash-to-ristretto/v1");
        h.update(input);
        RistrettoPoint::from_uniform_bytes(&h.finalize().into())
    }

    fn random_scalar<R: Rng + ?Sized>(rng: &mut R) -> Scalar {
        loop {
            let mut wide = [0u8; 64];
            rng.fill(&mut wide[..]);
            let s = Scalar::from_bytes_mod_order_wide(&wide);
            if s != Scalar::ZERO {
                return s;
            }
        }
    }

    fn random_element<R: Rng + ?Sized>(rng: &mut R) -> RistrettoPoint {
        let mut wide = [0u8; 64];
        rng.fill(&mut wide[..]);
        RistrettoPoint::from_uniform_bytes(&wide)
    }

    fn one() -> Scalar {
        Scalar::ONE
    }

    fn invert(s: &Scalar) -> Scalar {
        s.invert()
    }

    fn pow(e: &RistrettoPoint, s: &Scalar) -> RistrettoPoint {
        e * s
    }

    fn is_identity(e: &RistrettoPoint) -> bool {
        *e == RistrettoPoint::identity()
    }

    fn encode(e: &RistrettoPoint) -> [u8; 32] {
        e.compress().to_bytes()
    }

    fn decode(bytes: &[u8; 32]) -> Option<RistrettoPoint> {
        CompressedRistretto(*bytes).decompress()
    }

    fn encode_scalar(s: &Scalar) -> [u8; 32] {
        s.to_bytes()
    }

    fn decode_scalar(bytes: &[u8; 32]) -> Option<Scalar> {
        Option::from(Scalar::from_canonical_bytes(*bytes)).filter(|s| *s != Scalar::ZERO)
    }
}

/// Order-`Q` subgroup of quadratic residues modulo the safe prime `P = 2Q + 1`.
///
/// Far too small for security; used to test group-generic code exhaustively.
#[derive(Clone, Copy, Debug)]
pub struct ToyGroup;

impl ToyGroup {
    pub const P: u64 = 2039;
    pub const Q: u64 = 1019;

    fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
        a * b % m
    }

    /// Square-and-multiply `base^exp mod m`.
    pub fn pow_mod(base: u64, mut exp: u64, m: u64) -> u64 {
        let mut acc = 1 % m;
        let mut b = base % m;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = Self::mul_mod(acc, b, m);
            }
            b = Self::mul_mod(b, b, m);
            exp >>= 1;
        }
        acc
    }

    fn in_subgroup(x: u64) -> bool {
        (1..Self::P).contains(&x) && Self::pow_mod(x, Self::Q, Self::P) == 1
    }
}

impl PrimeGroup for ToyGroup {
    type Scalar = u64;
    type Element = u64;

    fn hash_to_group(input: &[u8]) -> u64 {
        (0u32..)
            .map(|ctr| {
                let mut h = sha2::Sha256::new();
                h.update(ctr.to_be_bytes());
                h.update(input);
                let x = u64::from_be_bytes(h.finalize()[..8].try_into().expect("8 bytes")) % (Self::P - 1) + 1;
                x * x % Self::P
            })
            .find(|&e| e != 1)
            .expect("some counter avoids the identity")
    }

    fn random_scalar<R: Rng + ?Sized>(rng: &mut R) -> u64 {
        rng.random_range(1..Self::Q)
    }

    fn random_element<R: Rng + ?Sized>(rng: &mut R) -> u64 {
        let x = rng.random_range(2..Self::P - 1);
        x * x % Self::P
    }

    fn one() -> u64 {
        1
    }

    fn invert(s: &u64) -> u64 {
        Self::pow_mod(*s, Self::Q - 2, Self::Q)
    }

    fn pow(e: &u64, s: &u64) -> u64 {
        Self::pow_mod(*e, *s, Self::P)
    }

    fn is_identity(e: &u64) -> bool {
        *e == 1
    }

    fn encode(e: &u64) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[24..].copy_from_slice(&e.to_be_bytes());
        out
    }

    fn decode(bytes: &[u8; 32]) -> Option<u64> {
        if bytes[..24].iter().any(|&b| b != 0) {
            return None;
        }
        let x = u64::from_be_bytes(bytes[24..].try_into().expect("8 bytes"));
        Self::in_subgroup(x).then_some(x)
    }

    fn encode_scalar(s: &u64) -> [u8; 32] {
        Self::encode(s)
    }

    fn decode_scalar(bytes: &[u8; 32]) -> Option<u64> {
        if bytes[..24].iter().any(|&b| b != 0) {
            return None;
        }
        let s = u64::from_be_bytes(bytes[24..].try_into().expect("8 bytes"));
        (1..Self::Q).contains(&s).then_some(s)
    }
}
