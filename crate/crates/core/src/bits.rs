//! Fixed-width 256-bit similarity hashes and Hamming-distance helpers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of bits in a [`PerceptualHash`].
pub const HASH_BITS: usize = 256;
/// Serialized size of a [`PerceptualHash`] in bytes.
pub const HASH_BYTES: usize = HASH_BITS / 8;

/// A 256-bit similarity embedding.
///
/// Bit `i` is stored most-significant-first: bit 0 is the top bit of the first
/// word, so the 64-character hex form reads left to right in bit order. For the
/// DCT hash, bit `i` is coefficient `(i / 16, i % 16)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PerceptualHash {
    words: [u64; 4],
}

impl PerceptualHash {
    pub const ZERO: PerceptualHash = PerceptualHash { words: [0; 4] };

    pub const fn from_words(words: [u64; 4]) -> Self {
        Self { words }
    }

    pub fn words(&self) -> &[u64; 4] {
        &self.words
    }

    pub fn from_bytes(bytes: &[u8; HASH_BYTES]) -> Self {
        let mut words = [0u64; 4];
        for (w, chunk) in words.iter_mut().zip(bytes.chunks_exact(8)) {
            *w = u64::from_be_bytes(chunk.try_into().expect("chunk of 8"));
        }
        Self { words }
    }

    pub fn to_bytes(&self) -> [u8; HASH_BYTES] {
        let mut out = [0u8; HASH_BYTES];
        for (chunk, w) in out.chunks_exact_mut(8).zip(self.words.iter()) {
            chunk.copy_from_slice(&w.to_be_bytes());
        }
        out
    }

    /// Builds a hash whose first `bits.len()` positions are taken from `bits`.
    pub fn from_bits(bits: &[bool]) -> Self {
        assert!(bits.len() <= HASH_BITS, "at most {HASH_BITS} bits");
        let mut h = Self::ZERO;
        for (i, &b) in bits.iter().enumerate() {
            h.set_bit(i, b);
        }
        h
    }

    /// Hash whose low-order `ell` positions hold the `ell` low bits of `value`,
    /// with bit position 0 taking the most significant of them.
    ///
    /// Handy for the short hash spaces used in exhaustive tests.
    pub fn from_low_bits(value: u64, ell: usize) -> Self {
        assert!(ell <= 64);
        let bits: Vec<bool> = (0..ell).map(|i| (value >> (ell - 1 - i)) & 1 == 1).collect();
        Self::from_bits(&bits)
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < HASH_BITS);
        (self.words[i / 64] >> (63 - i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set_bit(&mut self, i: usize, value: bool) {
        let mask = 1u64 << (63 - i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip_bit(&mut self, i: usize) {
        self.words[i / 64] ^= 1u64 << (63 - i % 64);
    }

    #[inline]
    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    #[inline]
    pub fn distance(&self, other: &Self) -> u32 {
        (self.words[0] ^ other.words[0]).count_ones()
            + (self.words[1] ^ other.words[1]).count_ones()
            + (self.words[2] ^ other.words[2]).count_ones()
            + (self.words[3] ^ other.words[3]).count_ones()
    }

    /// Popcount of `(self ^ other) & mask`.
    #[inline]
    pub fn masked_distance(&self, other: &Self, mask: &Self) -> u32 {
        ((self.words[0] ^ other.words[0]) & mask.words[0]).count_ones()
            + ((self.words[1] ^ other.words[1]) & mask.words[1]).count_ones()
            + ((self.words[2] ^ other.words[2]) & mask.words[2]).count_ones()
            + ((self.words[3] ^ other.words[3]) & mask.words[3]).count_ones()
    }

    pub fn to_hex(&self) -> String {
        self.words.iter().map(|w| format!("{w:016x}")).collect()
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() != 64 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::MalformedHash(format!(
                "expected 64 hex characters, got {:?}",
                s
            )));
        }
        let mut words = [0u64; 4];
        for (i, w) in words.iter_mut().enumerate() {
            *w = u64::from_str_radix(&s[i * 16..(i + 1) * 16], 16)
                .map_err(|e| Error::MalformedHash(e.to_string()))?;
        }
        Ok(Self { words })
    }
}

impl std::ops::BitXor for PerceptualHash {
    type Output = PerceptualHash;

    fn bitxor(self, rhs: Self) -> Self {
        let mut words = self.words;
        for (w, r) in words.iter_mut().zip(rhs.words) {
            *w ^= r;
        }
        Self { words }
    }
}

impl std::ops::Not for PerceptualHash {
    type Output = PerceptualHash;

    fn not(self) -> Self {
        Self { words: self.words.map(|w| !w) }
    }
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PerceptualHash({})", self.to_hex())
    }
}

impl FromStr for PerceptualHash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_hex(s)
    }
}

impl Serialize for PerceptualHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PerceptualHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Hamming distance between two equal-length byte strings.
pub fn hamming(a: &[u8], b: &[u8]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let mut chunks_a = a.chunks_exact(8);
    let mut chunks_b = b.chunks_exact(8);
    let mut total = 0u32;
    for (x, y) in chunks_a.by_ref().zip(chunks_b.by_ref()) {
        let x = u64::from_ne_bytes(x.try_into().expect("chunk of 8"));
        let y = u64::from_ne_bytes(y.try_into().expect("chunk of 8"));
        total += (x ^ y).count_ones();
    }
    for (x, y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        total += (x ^ y).count_ones();
    }
    Ok(total)
}

/// Hamming distance between two equal-length bool slices.
pub fn hamming_bits(a: &[bool], b: &[bool]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count() as u32)
}

/// Two hashes are `threshold`-similar when their distance is strictly below it.
pub fn t_similar(a: &PerceptualHash, b: &PerceptualHash, threshold: u32) -> bool {
    a.distance(b) < threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_distance(a: &PerceptualHash, b: &PerceptualHash) -> u32 {
        (0..HASH_BITS).filter(|&i| a.bit(i) != b.bit(i)).count() as u32
    }

    fn random_hash(rng: &mut impl Rng) -> PerceptualHash {
        PerceptualHash::from_words(rng.random())
    }

    #[test]
    fn byte_examples() {
        assert_eq!(hamming(&[0x00], &[0xff]).unwrap(), 8);
        assert_eq!(hamming(b"abcdefghij", b"abcdefghij").unwrap(), 0);
        assert!(matches!(hamming(&[0], &[0, 1]), Err(Error::LengthMismatch { .. })));
        assert!(hamming_bits(&[true], &[true, false]).is_err());
    }

    #[test]
    fn popcount_matches_bit_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let a = random_hash(&mut rng);
            let b = random_hash(&mut rng);
            assert_eq!(a.distance(&b), naive_distance(&a, &b));
        }
    }

    #[test]
    fn byte_path_matches_word_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let a = random_hash(&mut rng);
            let b = random_hash(&mut rng);
            assert_eq!(hamming(&a.to_bytes(), &b.to_bytes()).unwrap(), a.distance(&b));
        }
    }

    #[test]
    fn t_similarity_is_strict() {
        let x = PerceptualHash::from_words([0xdead_beef, 1, 2, 3]);
        assert!(t_similar(&x, &x, 1));
        assert!(!t_similar(&x, &!x, 256));

        let mut y = x;
        for i in (0..HASH_BITS).step_by(8) {
            y.flip_bit(i);
        }
        assert_eq!(x.distance(&y), 32);
        assert!(!t_similar(&x, &y, 32));
        assert!(t_similar(&x, &y, 33));
    }

    #[test]
    fn hex_layout() {
        let mut h = PerceptualHash::ZERO;
        h.set_bit(0, true);
        assert_eq!(&h.to_hex()[..2], "80");
        h.set_bit(255, true);
        assert!(h.to_hex().ends_with('1'));
        assert_eq!(PerceptualHash::from_hex(&h.to_hex()).unwrap(), h);
        assert!(PerceptualHash::from_hex("abc").is_err());
        assert!(PerceptualHash::from_hex(&"g".repeat(64)).is_err());
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in any::<[u64; 4]>(), b in any::<[u64; 4]>(), c in any::<[u64; 4]>()) {
            let (a, b, c) = (
                PerceptualHash::from_words(a),
                PerceptualHash::from_words(b),
                PerceptualHash::from_words(c),
            );
            prop_assert_eq!(a.distance(&a), 0);
            prop_assert_eq!(a.distance(&b), b.distance(&a));
            prop_assert!(a.distance(&c) <= a.distance(&b) + b.distance(&c));
        }

        #[test]
        fn hex_and_bytes_roundtrip(w in any::<[u64; 4]>()) {
            let h = PerceptualHash::from_words(w);
            prop_assert_eq!(PerceptualHash::from_hex(&h.to_hex()).unwrap(), h);
            prop_assert_eq!(PerceptualHash::from_bytes(&h.to_bytes()), h);
        }
    }
}
