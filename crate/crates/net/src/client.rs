//! Instrumented client for one query session.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Instant;

use rand::Rng;
use sbb_core::{CoarseEmbedding, PerceptualHash};
use sbb_crypto::{ClientSession, PrimeGroup, Ristretto, ServerOffer, SketchCode};
use serde::Serialize;
use thiserror::Error;

use crate::wire::{read_message, write_message, Message, Mode, SbbRequest, WireError};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("server error {code:?}: {message}")]
    Server { code: crate::wire::ErrorCode, message: String },
    #[error("protocol desync: expected {expected}, got message kind {got:#04x}")]
    Desync { expected: &'static str, got: u8 },
    #[error("crypto: {0}")]
    Crypto(#[from] sbb_crypto::CryptoError),
    #[error("server sent an invalid group element")]
    InvalidElement,
}

impl From<std::io::Error> for ClientError {
    fn from(e: std::io::Error) -> Self {
        Self::Wire(WireError::Io(e))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PhaseMetrics {
    pub name: &'static str,
    pub millis: f64,
    pub bytes_sent: usize,
    pub bytes_received: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SessionMetrics {
    pub phases: Vec<PhaseMetrics>,
    /// Body bytes of the bucket response or offer, without the frame header.
    pub response_body_bytes: usize,
}

impl SessionMetrics {
    pub fn total_millis(&self) -> f64 {
        self.phases.iter().map(|p| p.millis).sum()
    }

    pub fn total_bytes(&self) -> usize {
        self.phases.iter().map(|p| p.bytes_sent + p.bytes_received).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutcome {
    pub matched: bool,
    pub bucket_size: usize,
    /// Retrieval mode only: the bucket members closer than the threshold.
    pub matches: Vec<PerceptualHash>,
    pub metrics: SessionMetrics,
}

/// What the client reveals. `None` asks for the whole database.
pub fn make_request(mode: Mode, embedding: Option<&CoarseEmbedding>) -> SbbRequest {
    match embedding {
        Some(e) => SbbRequest { mode, indices: e.index_set.indices().to_vec(), bits: e.bits.clone() },
        None => SbbRequest { mode, indices: Vec::new(), bits: Vec::new() },
    }
}

const FRAME_HEADER: usize = 6;

fn expect<T>(
    msg: Message,
    expected: &'static str,
    pick: impl FnOnce(Message) -> Result<T, Message>,
) -> Result<T, ClientError> {
    match msg {
        Message::Error { code, message } => Err(ClientError::Server { code, message }),
        other => pick(other).map_err(|m| ClientError::Desync { expected, got: m.kind() }),
    }
}

/// Runs one session against `addr`.
///
/// Retrieval mode matches when some returned hash is closer than `t`. SSSP
/// mode recovers members within `t - 1` of `hash`.
pub fn query<R: Rng + ?Sized>(
    addr: impl ToSocketAddrs,
    hash: &PerceptualHash,
    embedding: Option<&CoarseEmbedding>,
    mode: Mode,
    t: u32,
    rng: &mut R,
) -> Result<QueryOutcome, ClientError> {
    let start = Instant::now();
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let mut reader = BufReader::with_capacity(1 << 16, stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut metrics = SessionMetrics::default();

    let sent = write_message(&mut writer, &Message::SbbRequest(make_request(mode, embedding)))?;
    let (reply, received) = read_message(&mut reader)?;
    metrics.response_body_bytes = received - FRAME_HEADER;

    match mode {
        Mode::Retrieval => {
            let bucket = expect(reply, "bucket response", |m| match m {
                Message::BucketResponse(b) => Ok(b),
                other => Err(other),
            })?;
            metrics.phases.push(PhaseMetrics {
                name: "bucket",
                millis: start.elapsed().as_secs_f64() * 1e3,
                bytes_sent: sent,
                bytes_received: received,
            });
            let compare = Instant::now();
            let matches: Vec<PerceptualHash> = bucket.iter().filter(|m| m.distance(hash) < t).copied().collect();
            metrics.phases.push(PhaseMetrics { name: "compare", millis: compare.elapsed().as_secs_f64() * 1e3, ..Default::default() });
            Ok(QueryOutcome { matched: !matches.is_empty(), bucket_size: bucket.len(), matches, metrics })
        }
        Mode::Sssp => {
            let members = expect(reply, "sssp offer", |m| match m {
                Message::SsspOffer(o) => Ok(o),
                other => Err(other),
            })?;
            metrics.phases.push(PhaseMetrics {
                name: "offer",
                millis: start.elapsed().as_secs_f64() * 1e3,
                bytes_sent: sent,
                bytes_received: received,
            });
            let bucket_size = members.len();
            if members.is_empty() {
                return Ok(QueryOutcome { matched: false, bucket_size, matches: Vec::new(), metrics });
            }
            let oprf = Instant::now();
            let code = SketchCode::for_threshold(t)?;
            let (sketches, tokens) = members.into_iter().unzip();
            let session = ClientSession::<Ristretto>::start(hash, &ServerOffer { sketches, tokens }, &code, rng)?;
            let blinded = session.blinded().iter().map(Ristretto::encode).collect();
            let sent = write_message(&mut writer, &Message::Blinded(blinded))?;
            let (reply, received) = read_message(&mut reader)?;
            let evaluated = expect(reply, "evaluated elements", |m| match m {
                Message::Evaluated(e) => Ok(e),
                other => Err(other),
            })?;
            let elems = evaluated
                .iter()
                .map(Ristretto::decode)
                .collect::<Option<Vec<_>>>()
                .ok_or(ClientError::InvalidElement)?;
            let verdict = session.finish(&elems)?;
            metrics.phases.push(PhaseMetrics {
                name: "oprf",
                millis: oprf.elapsed().as_secs_f64() * 1e3,
                bytes_sent: sent,
                bytes_received: received,
            });
            Ok(QueryOutcome {
                matched: verdict.matched,
                bucket_size,
                matches: verdict.recovered.into_iter().collect(),
                metrics,
            })
        }
    }
}

/// Sends raw bytes and returns whatever single frame comes back.
pub fn send_raw(addr: impl ToSocketAddrs, bytes: &[u8]) -> Result<Message, ClientError> {
    let mut stream = TcpStream::connect(addr)?;
    stream.write_all(bytes)?;
    stream.flush()?;
    let mut reader = BufReader::new(stream);
    let (msg, _) = read_message(&mut reader)?;
    // the server closes after an error frame
    let mut rest = Vec::new();
    let _ = reader.read_to_end(&mut rest);
    Ok(msg)
}
