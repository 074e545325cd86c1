//! Sketch-based similarity protocol.
//!
//! ```text
//! server: z_i = SS(w_i), Y_i = F_K(w_i)        -> (z, Y)
//! client: p_i = Rec(z_i, v), X_i = H(p_i)^tau  -> X
//! server: X_i^K                                -> client finalizes and compares
//! ```
//!
//! The client replaces repeated candidates and decode failures with random
//! group elements, so the server always sees one element per bucket member.

use std::collections::HashMap;

use rand::Rng;
use sbb_core::PerceptualHash;

use crate::error::{CryptoError, Result};
use crate::group::PrimeGroup;
use crate::oprf::{blind, evaluate, finalize, unblind, OprfKey, OprfOutput};
use crate::sketch::{rec, ss, Sketch, SketchCode};

/// First server message, order-aligned with the bucket.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerOffer {
    pub sketches: Vec<Sketch>,
    pub tokens: Vec<OprfOutput>,
}

pub fn server_prepare<G: PrimeGroup>(
    bucket: &[PerceptualHash],
    key: &OprfKey<G>,
    code: &SketchCode,
) -> Result<ServerOffer> {
    if bucket.is_empty() {
        return Err(CryptoError::EmptyBucket);
    }
    Ok(ServerOffer {
        sketches: bucket.iter().map(|w| ss(w, code)).collect(),
        tokens: bucket.iter().map(|w| key.evaluate_direct(&w.to_bytes())).collect(),
    })
}

pub fn server_evaluate<G: PrimeGroup>(blinded: &[G::Element], key: &OprfKey<G>) -> Result<Vec<G::Element>> {
    blinded.iter().map(|x| evaluate(x, key)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Real(PerceptualHash),
    Dummy,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SsspVerdict {
    pub matched: bool,
    /// Bucket position whose token matched.
    pub member: Option<usize>,
    /// The recovered hash behind the match.
    pub recovered: Option<PerceptualHash>,
}

/// Client state between sending blinded elements and receiving evaluations.
pub struct ClientSession<G: PrimeGroup> {
    tau: G::Scalar,
    slots: Vec<Slot>,
    blinded: Vec<G::Element>,
    tokens: Vec<OprfOutput>,
}

impl<G: PrimeGroup> ClientSession<G> {
    pub fn start<R: Rng + ?Sized>(
        v: &PerceptualHash,
        offer: &ServerOffer,
        code: &SketchCode,
        rng: &mut R,
    ) -> Result<Self> {
        if offer.sketches.len() != offer.tokens.len() {
            return Err(CryptoError::LengthMismatch { expected: offer.sketches.len(), actual: offer.tokens.len() });
        }
        let tau = G::random_scalar(rng);
        let mut seen = std::collections::HashSet::new();
        let mut slots = Vec::with_capacity(offer.sketches.len());
        let mut blinded = Vec::with_capacity(offer.sketches.len());
        for z in &offer.sketches {
            match rec(z, v, code) {
                Ok(p) if seen.insert(p) => {
                    slots.push(Slot::Real(p));
                    blinded.push(blind::<G>(&p.to_bytes(), &tau));
                }
                Ok(_) | Err(CryptoError::DecodeFailure { .. }) => {
                    slots.push(Slot::Dummy);
                    blinded.push(G::random_element(rng));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Self { tau, slots, blinded, tokens: offer.tokens.clone() })
    }

    pub fn blinded(&self) -> &[G::Element] {
        &self.blinded
    }

    /// Slots carrying a genuine recovered candidate.
    pub fn real_queries(&self) -> usize {
        self.slots.iter().filter(|s| matches!(s, Slot::Real(_))).count()
    }

    /// Unblinds the server's answers and looks for any finalized output among
    /// the server's tokens.
    pub fn finish(self, evaluated: &[G::Element]) -> Result<SsspVerdict> {
        if evaluated.len() != self.slots.len() {
            return Err(CryptoError::LengthMismatch { expected: self.slots.len(), actual: evaluated.len() });
        }
        let tokens: HashMap<OprfOutput, usize> =
            self.tokens.iter().enumerate().rev().map(|(i, t)| (*t, i)).collect();
        for (slot, y) in self.slots.iter().zip(evaluated) {
            let Slot::Real(p) = slot else { continue };
            let out = finalize::<G>(&p.to_bytes(), &unblind::<G>(y, &self.tau));
            if let Some(&i) = tokens.get(&out) {
                return Ok(SsspVerdict { matched: true, member: Some(i), recovered: Some(*p) });
            }
        }
        Ok(SsspVerdict { matched: false, member: None, recovered: None })
    }
}

/// Runs both parties in-process.
pub fn run_local<G: PrimeGroup, R: Rng + ?Sized>(
    v: &PerceptualHash,
    bucket: &[PerceptualHash],
    key: &OprfKey<G>,
    code: &SketchCode,
    rng: &mut R,
) -> Result<SsspVerdict> {
    let offer = server_prepare(bucket, key, code)?;
    let session = ClientSession::<G>::start(v, &offer, code, rng)?;
    let evaluated = server_evaluate(session.blinded(), key)?;
    session.finish(&evaluated)
}
