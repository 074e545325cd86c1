//! Syndrome secure sketch over the first-order Reed-Muller code RM(1, m).
//!
//! Position `p` of a length `n = 2^m` word is the hash bit `p`; a codeword
//! evaluates an affine function `a0 + <a, p>` at every point `p`. The
//! information set is `{0} ∪ {2^i}`, so the syndrome of `v` is `v` XOR the
//! codeword agreeing with `v` there, read at the remaining positions. Decoding
//! takes the fast Walsh-Hadamard transform and picks the largest coefficient,
//! which is exact up to `n/4 - 1` errors.

use sbb_core::PerceptualHash;

use crate::error::{CryptoError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SketchCode {
    m: u32,
    capacity: u32,
    /// Min-entropy of the hash source the sketch is meant for. Informational only.
    pub declared_mu: Option<f64>,
    /// Residual min-entropy given the sketch. Informational only.
    pub declared_mu_prime: Option<f64>,
    ones: PerceptualHash,
    /// Codeword of the coordinate function `x_i`, for each `i < m`.
    rows: Vec<PerceptualHash>,
    check_positions: Vec<usize>,
}

impl SketchCode {
    /// RM(1, m) with `3 <= m <= 8`, accepting error patterns up to `capacity`.
    pub fn reed_muller(m: u32, capacity: u32) -> Result<Self> {
        if !(3..=8).contains(&m) {
            return Err(CryptoError::InvalidCode(format!("m = {m} outside 3..=8")));
        }
        let n = 1usize << m;
        let radius = (n / 4 - 1) as u32;
        if capacity > radius {
            return Err(CryptoError::InvalidCode(format!("capacity {capacity} beyond decoding radius {radius}")));
        }
        let mut ones = PerceptualHash::ZERO;
        let mut rows = vec![PerceptualHash::ZERO; m as usize];
        for p in 0..n {
            ones.set_bit(p, true);
            for (i, row) in rows.iter_mut().enumerate() {
                row.set_bit(p, (p >> i) & 1 == 1);
            }
        }
        let check_positions = (0..n).filter(|&p| !(p == 0 || p.is_power_of_two())).collect();
        Ok(Self { m, capacity, declared_mu: None, declared_mu_prime: None, ones, rows, check_positions })
    }

    /// The [256, 9] code with capacity `t - 1`, so that recovery succeeds exactly
    /// for pairs closer than `t`.
    pub fn for_threshold(t: u32) -> Result<Self> {
        if t == 0 {
            return Err(CryptoError::InvalidCode("threshold must be positive".into()));
        }
        Self::reed_muller(8, t - 1)
    }

    /// The [8, 4] code correcting one error.
    pub fn toy() -> Self {
        Self::reed_muller(3, 1).expect("valid toy code")
    }

    pub fn n(&self) -> usize {
        1 << self.m
    }

    pub fn dimension(&self) -> usize {
        self.m as usize + 1
    }

    pub fn syndrome_len(&self) -> usize {
        self.n() - self.dimension()
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn decoding_radius(&self) -> u32 {
        (self.n() / 4 - 1) as u32
    }

    /// Positions the syndrome is read at, ascending.
    pub fn check_positions(&self) -> &[usize] {
        &self.check_positions
    }

    fn codeword(&self, a0: bool, a: usize) -> PerceptualHash {
        let mut c = if a0 { self.ones } else { PerceptualHash::ZERO };
        for (i, row) in self.rows.iter().enumerate() {
            if (a >> i) & 1 == 1 {
                c = c ^ *row;
            }
        }
        c
    }

    fn truncate(&self, v: &PerceptualHash) -> PerceptualHash {
        let w = v.words();
        let o = self.ones.words();
        PerceptualHash::from_words([w[0] & o[0], w[1] & o[1], w[2] & o[2], w[3] & o[3]])
    }

    /// `v` minus the codeword that agrees with it on the information set.
    fn coset_word(&self, v: &PerceptualHash) -> PerceptualHash {
        let a0 = v.bit(0);
        let a = (0..self.m as usize).fold(0, |acc, i| acc | (usize::from(v.bit(1 << i) ^ a0) << i));
        self.truncate(&(*v ^ self.codeword(a0, a)))
    }

    /// Nearest codeword to the first `n` bits of `x` (first maximum on ties).
    pub fn decode(&self, x: &PerceptualHash) -> PerceptualHash {
        let n = self.n();
        let mut f: Vec<i32> = (0..n).map(|p| if x.bit(p) { -1 } else { 1 }).collect();
        let mut h = 1;
        while h < n {
            for start in (0..n).step_by(2 * h) {
                for j in start..start + h {
                    let (a, b) = (f[j], f[j + h]);
                    f[j] = a + b;
                    f[j + h] = a - b;
                }
            }
            h *= 2;
        }
        let (u, &val) = f
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.abs().cmp(&b.abs()).then(j.cmp(i)))
            .expect("nonempty transform");
        self.codeword(val < 0, u)
    }

    pub fn is_codeword(&self, v: &PerceptualHash) -> bool {
        self.coset_word(v) == PerceptualHash::ZERO
    }
}

/// Packed syndrome bits, one per check position.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sketch {
    bits: Vec<u8>,
    len: usize,
}

impl Sketch {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits[i / 8] >> (7 - i % 8) & 1 == 1
    }

    pub fn packed(&self) -> &[u8] {
        &self.bits
    }

    fn from_fn(len: usize, f: impl Fn(usize) -> bool) -> Self {
        let mut bits = vec![0u8; len.div_ceil(8)];
        for i in (0..len).filter(|&i| f(i)) {
            bits[i / 8] |= 0x80 >> (i % 8);
        }
        Self { bits, len }
    }

    pub fn from_packed(len: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != len.div_ceil(8) {
            return Err(CryptoError::MalformedSketch);
        }
        // padding bits must be zero so encodings are canonical
        if !len.is_multiple_of(8) && bits[len / 8] & (0xFF >> (len % 8)) != 0 {
            return Err(CryptoError::MalformedSketch);
        }
        Ok(Self { bits, len })
    }

    /// `u16` big-endian bit length followed by the packed bits.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.bits.len());
        out.extend_from_slice(&(self.len as u16).to_be_bytes());
        out.extend_from_slice(&self.bits);
        out
    }

    /// Parses one encoded sketch from the front of `buf`, returning the rest.
    pub fn from_bytes(buf: &[u8]) -> Result<(Self, &[u8])> {
        let (len, rest) = buf.split_first_chunk::<2>().ok_or(CryptoError::MalformedSketch)?;
        let len = usize::from(u16::from_be_bytes(*len));
        let bytes = len.div_ceil(8);
        if rest.len() < bytes {
            return Err(CryptoError::MalformedSketch);
        }
        let (body, rest) = rest.split_at(bytes);
        Ok((Self::from_packed(len, body.to_vec())?, rest))
    }
}

impl std::ops::BitXor for &Sketch {
    type Output = Sketch;

    fn bitxor(self, rhs: &Sketch) -> Sketch {
        assert_eq!(self.len, rhs.len, "sketch lengths differ");
        Sketch { bits: self.bits.iter().zip(&rhs.bits).map(|(a, b)| a ^ b).collect(), len: self.len }
    }
}

/// Syndrome of the first `n` bits of `v`.
pub fn ss(v: &PerceptualHash, code: &SketchCode) -> Sketch {
    let w = code.coset_word(v);
    Sketch::from_fn(code.syndrome_len(), |i| w.bit(code.check_positions[i]))
}

/// Recovers the sketched hash from a nearby `v_prime`.
///
/// Bits of `v_prime` past the code length pass through unchanged. Fails when
/// the decoded error pattern is heavier than the code's capacity.
pub fn rec(z: &Sketch, v_prime: &PerceptualHash, code: &SketchCode) -> Result<PerceptualHash> {
    if z.len() != code.syndrome_len() {
        return Err(CryptoError::SketchLength { expected: code.syndrome_len(), actual: z.len() });
    }
    let s = &ss(v_prime, code) ^ z;
    let mut x = PerceptualHash::ZERO;
    for (i, &p) in code.check_positions.iter().enumerate() {
        x.set_bit(p, s.bit(i));
    }
    let e = x ^ code.decode(&x);
    let weight = e.count_ones();
    if weight > code.capacity {
        return Err(CryptoError::DecodeFailure { weight, capacity: code.capacity });
    }
    Ok(*v_prime ^ e)
}
