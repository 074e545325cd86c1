//! Length-prefixed binary frames.
//!
//! ```text
//! frame   = len:u32be  version:u8  kind:u8  body
//! ```
//!
//! `len` counts the version, kind and body bytes. All integers are big-endian.

use std::io::{Read, Write};

use sbb_core::PerceptualHash;
use sbb_crypto::{OprfOutput, Sketch};
use thiserror::Error;

pub const PROTOCOL_VERSION: u8 = 1;
/// Largest accepted frame, enough for a 2^22-hash bucket.
pub const MAX_FRAME: usize = 1 << 28;

pub mod kind {
    pub const SBB_REQUEST: u8 = 0x01;
    pub const BUCKET_RESPONSE: u8 = 0x02;
    pub const SSSP_OFFER: u8 = 0x03;
    pub const BLINDED: u8 = 0x04;
    pub const EVALUATED: u8 = 0x05;
    pub const ERROR: u8 = 0x7F;
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("protocol version {0} not supported")]
    Version(u8),
    #[error("unknown message kind {0:#04x}")]
    UnknownKind(u8),
    #[error("frame of {0} bytes exceeds limit")]
    TooLarge(usize),
    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },
}

fn malformed(what: &'static str, reason: impl Into<String>) -> WireError {
    WireError::Malformed { what, reason: reason.into() }
}

pub type Result<T> = std::result::Result<T, WireError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Retrieval = 0,
    Sssp = 1,
}

impl Mode {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Self::Retrieval),
            1 => Ok(Self::Sssp),
            other => Err(malformed("request", format!("mode {other}"))),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "retrieval" => Ok(Self::Retrieval),
            "sssp" => Ok(Self::Sssp),
            other => Err(format!("unknown mode {other:?}; expected retrieval or sssp")),
        }
    }
}

/// A coarse embedding plus the second-stage mode. No indices means the whole
/// database.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SbbRequest {
    pub mode: Mode,
    pub indices: Vec<u16>,
    pub bits: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCode {
    VersionMismatch = 1,
    Malformed = 2,
    Unexpected = 3,
    Internal = 4,
}

impl ErrorCode {
    fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Self::VersionMismatch,
            2 => Self::Malformed,
            3 => Self::Unexpected,
            4 => Self::Internal,
            other => return Err(malformed("error frame", format!("code {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    SbbRequest(SbbRequest),
    BucketResponse(Vec<PerceptualHash>),
    SsspOffer(Vec<(Sketch, OprfOutput)>),
    Blinded(Vec<[u8; 32]>),
    Evaluated(Vec<[u8; 32]>),
    Error { code: ErrorCode, message: String },
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Self::SbbRequest(_) => kind::SBB_REQUEST,
            Self::BucketResponse(_) => kind::BUCKET_RESPONSE,
            Self::SsspOffer(_) => kind::SSSP_OFFER,
            Self::Blinded(_) => kind::BLINDED,
            Self::Evaluated(_) => kind::EVALUATED,
            Self::Error { .. } => kind::ERROR,
        }
    }
}

fn put_blobs(out: &mut Vec<u8>, blobs: &[[u8; 32]]) {
    out.extend_from_slice(&(blobs.len() as u32).to_be_bytes());
    for b in blobs {
        out.extend_from_slice(b);
    }
}

/// Message body, without the frame header.
pub fn encode_body(msg: &Message) -> Vec<u8> {
    let mut out = Vec::new();
    match msg {
        Message::SbbRequest(r) => {
            out.push(r.mode as u8);
            out.extend_from_slice(&(r.indices.len() as u16).to_be_bytes());
            for i in &r.indices {
                out.extend_from_slice(&i.to_be_bytes());
            }
            let mut packed = vec![0u8; r.bits.len().div_ceil(8)];
            for (j, _) in r.bits.iter().enumerate().filter(|(_, &b)| b) {
                packed[j / 8] |= 0x80 >> (j % 8);
            }
            out.extend_from_slice(&packed);
        }
        Message::BucketResponse(hashes) => {
            out.reserve(4 + 32 * hashes.len());
            out.extend_from_slice(&(hashes.len() as u32).to_be_bytes());
            for h in hashes {
                out.extend_from_slice(&h.to_bytes());
            }
        }
        Message::SsspOffer(members) => {
            out.extend_from_slice(&(members.len() as u32).to_be_bytes());
            for (sketch, token) in members {
                out.extend_from_slice(&sketch.to_bytes());
                out.extend_from_slice(&token.0);
            }
        }
        Message::Blinded(elems) | Message::Evaluated(elems) => put_blobs(&mut out, elems),
        Message::Error { code, message } => {
            out.push(*code as u8);
            let bytes = message.as_bytes();
            let n = bytes.len().min(u16::MAX as usize);
            out.extend_from_slice(&(n as u16).to_be_bytes());
            out.extend_from_slice(&bytes[..n]);
        }
    }
    out
}

/// Complete frame including the length prefix.
pub fn encode(msg: &Message) -> Vec<u8> {
    let body = encode_body(msg);
    let mut out = Vec::with_capacity(6 + body.len());
    out.extend_from_slice(&((body.len() + 2) as u32).to_be_bytes());
    out.push(PROTOCOL_VERSION);
    out.push(msg.kind());
    out.extend_from_slice(&body);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(malformed(self.what, format!("truncated: need {n} bytes, have {}", self.buf.len())));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn blob(&mut self) -> Result<[u8; 32]> {
        Ok(self.take(32)?.try_into().expect("32 bytes"))
    }

    /// Element count, checked against the bytes left so a hostile count cannot
    /// trigger a huge allocation.
    fn count(&mut self, min_item: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.buf.len() {
            return Err(malformed(self.what, format!("count {n} exceeds payload")));
        }
        Ok(n)
    }

    fn finish(self) -> Result<()> {
        if !self.buf.is_empty() {
            return Err(malformed(self.what, format!("{} trailing bytes", self.buf.len())));
        }
        Ok(())
    }
}

fn decode_request(c: &mut Cursor<'_>) -> Result<SbbRequest> {
    let mode = Mode::from_byte(c.u8()?)?;
    let d = usize::from(c.u16()?);
    if d > 256 {
        return Err(malformed("request", format!("d = {d} exceeds 256")));
    }
    let mut seen = [false; 256];
    let mut indices = Vec::with_capacity(d);
    for _ in 0..d {
        let i = c.u16()?;
        if i >= 256 {
            return Err(malformed("request", format!("index {i} out of range")));
        }
        if std::mem::replace(&mut seen[usize::from(i)], true) {
            return Err(malformed("request", format!("duplicate index {i}")));
        }
        indices.push(i);
    }
    let packed = c.take(d.div_ceil(8))?;
    if d % 8 != 0 && packed[d / 8] & (0xFF >> (d % 8)) != 0 {
        return Err(malformed("request", "nonzero padding bits"));
    }
    let bits = (0..d).map(|j| packed[j / 8] & (0x80 >> (j % 8)) != 0).collect();
    Ok(SbbRequest { mode, indices, bits })
}

/// Decodes `version | kind | body`.
pub fn decode(frame: &[u8]) -> Result<Message> {
    let [version, k, body @ ..] = frame else {
        return Err(malformed("frame", "shorter than header"));
    };
    if *version != PROTOCOL_VERSION {
        return Err(WireError::Version(*version));
    }
    let what = match *k {
        kind::SBB_REQUEST => "request",
        kind::BUCKET_RESPONSE => "bucket response",
        kind::SSSP_OFFER => "sssp offer",
        kind::BLINDED => "blinded elements",
        kind::EVALUATED => "evaluated elements",
        kind::ERROR => "error frame",
        other => return Err(WireError::UnknownKind(other)),
    };
    let mut c = Cursor { buf: body, what };
    let msg = match *k {
        kind::SBB_REQUEST => Message::SbbRequest(decode_request(&mut c)?),
        kind::BUCKET_RESPONSE => {
            let n = c.count(32)?;
            Message::BucketResponse((0..n).map(|_| Ok(PerceptualHash::from_bytes(&c.blob()?))).collect::<Result<_>>()?)
        }
        kind::SSSP_OFFER => {
            let n = c.count(34)?;
            let mut members = Vec::with_capacity(n);
            for _ in 0..n {
                let (sketch, rest) = Sketch::from_bytes(c.buf).map_err(|e| malformed(what, e.to_string()))?;
                c.buf = rest;
                members.push((sketch, OprfOutput(c.blob()?)));
            }
            Message::SsspOffer(members)
        }
        kind::BLINDED | kind::EVALUATED => {
            let n = c.count(32)?;
            let elems = (0..n).map(|_| c.blob()).collect::<Result<Vec<_>>>()?;
            if *k == kind::BLINDED {
                Message::Blinded(elems)
            } else {
                Message::Evaluated(elems)
            }
        }
        _ => {
            let code = ErrorCode::from_byte(c.u8()?)?;
            let n = usize::from(c.u16()?);
            let message = String::from_utf8(c.take(n)?.to_vec()).map_err(|_| malformed(what, "message is not UTF-8"))?;
            Message::Error { code, message }
        }
    };
    c.finish()?;
    Ok(msg)
}

/// Writes one frame, returning the number of bytes written.
pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<usize> {
    let frame = encode(msg);
    w.write_all(&frame)?;
    w.flush()?;
    Ok(frame.len())
}

/// Reads one frame, returning the message and the bytes consumed.
pub fn read_message<R: Read>(r: &mut R) -> Result<(Message, usize)> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(WireError::TooLarge(len));
    }
    if len < 2 {
        return Err(malformed("frame", format!("length {len} below header size")));
    }
    let mut frame = vec![0u8; len];
    r.read_exact(&mut frame)?;
    Ok((decode(&frame)?, len + 4))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_layout() {
        let msg = Message::SbbRequest(SbbRequest { mode: Mode::Sssp, indices: vec![3, 300 % 256], bits: vec![true, false] });
        let f = encode(&msg);
        assert_eq!(f, vec![0, 0, 0, 10, 1, 0x01, 1, 0, 2, 0, 3, 0, 44, 0x80]);
        assert_eq!(decode(&f[4..]).unwrap(), msg);
    }

    #[test]
    fn bucket_response_size() {
        let hashes = vec![PerceptualHash::ZERO; 5];
        assert_eq!(encode_body(&Message::BucketResponse(hashes)).len(), 4 + 32 * 5);
        assert_eq!(encode_body(&Message::BucketResponse(vec![])), vec![0, 0, 0, 0]);
    }

    #[test]
    fn request_validation() {
        let dup = [PROTOCOL_VERSION, kind::SBB_REQUEST, 0, 0, 2, 0, 7, 0, 7, 0];
        assert!(matches!(decode(&dup), Err(WireError::Malformed { .. })));
        let out_of_range = [PROTOCOL_VERSION, kind::SBB_REQUEST, 0, 0, 1, 1, 0, 0];
        assert!(decode(&out_of_range).is_err());
        let padding = [PROTOCOL_VERSION, kind::SBB_REQUEST, 0, 0, 1, 0, 7, 0x40];
        assert!(decode(&padding).is_err());
        let bad_mode = [PROTOCOL_VERSION, kind::SBB_REQUEST, 9, 0, 0];
        assert!(decode(&bad_mode).is_err());
        assert!(matches!(decode(&[9, kind::SBB_REQUEST]), Err(WireError::Version(9))));
        assert!(matches!(decode(&[PROTOCOL_VERSION, 0x42]), Err(WireError::UnknownKind(0x42))));
    }

    #[test]
    fn hostile_counts_rejected() {
        let frame = [PROTOCOL_VERSION, kind::BUCKET_RESPONSE, 0xFF, 0xFF, 0xFF, 0xFF];
        assert!(decode(&frame).is_err());
        let mut huge = std::io::Cursor::new(vec![0xFF, 0xFF, 0xFF, 0xFF]);
        assert!(matches!(read_message(&mut huge), Err(WireError::TooLarge(_))));
    }
}
