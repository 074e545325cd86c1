//! Threaded server: one thread per session over a shared database snapshot.

use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;

use log::{debug, warn};
use sbb_core::{sim_lsh, CoarseEmbedding, IndexSet, PerceptualHash, HASH_BITS};
use sbb_crypto::{server_evaluate, server_prepare, OprfKey, PrimeGroup, Ristretto, SketchCode};

use crate::wire::{read_message, write_message, ErrorCode, Message, Mode, SbbRequest, WireError};

#[derive(Clone, Debug, Default)]
pub struct Database {
    pub hashes: Vec<PerceptualHash>,
}

impl Database {
    pub fn new(hashes: Vec<PerceptualHash>) -> Self {
        Self { hashes }
    }
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// Inclusive bucket threshold on the restricted distance.
    pub k: usize,
}

/// Members of `db` in the bucket for `req`; an empty index set selects everything.
pub fn bucket_for(req: &SbbRequest, db: &[PerceptualHash], k: usize) -> Result<Vec<PerceptualHash>, String> {
    if req.indices.is_empty() {
        return Ok(db.to_vec());
    }
    let index_set = IndexSet::new(req.indices.clone(), HASH_BITS).map_err(|e| e.to_string())?;
    let emb = CoarseEmbedding::new(index_set, req.bits.clone()).map_err(|e| e.to_string())?;
    Ok(sim_lsh(&emb, db, k).hashes().copied().collect())
}

struct Shared {
    db: RwLock<Arc<Database>>,
    config: ServerConfig,
    key: OprfKey<Ristretto>,
    code: SketchCode,
    stop: AtomicBool,
}

/// A running server. Dropping the handle leaves it running; call [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Replaces the database. Sessions already running keep the snapshot they started with.
    pub fn reload(&self, db: Database) {
        *self.shared.db.write().expect("database lock poisoned") = Arc::new(db);
    }

    pub fn snapshot(&self) -> Arc<Database> {
        self.shared.db.read().expect("database lock poisoned").clone()
    }

    pub fn shutdown(mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

pub fn serve(
    addr: impl ToSocketAddrs,
    db: Database,
    config: ServerConfig,
    key: OprfKey<Ristretto>,
) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        db: RwLock::new(Arc::new(db)),
        config,
        key,
        // syndromes do not depend on capacity; the client's threshold governs recovery
        code: SketchCode::reed_muller(8, 0).expect("valid code"),
        stop: AtomicBool::new(false),
    });
    let accept_shared = shared.clone();
    let accept = std::thread::spawn(move || {
        for stream in listener.incoming() {
            if accept_shared.stop.load(Ordering::SeqCst) {
                break;
            }
            match stream {
                Ok(stream) => {
                    let shared = accept_shared.clone();
                    std::thread::spawn(move || {
                        let peer = stream.peer_addr().ok();
                        if let Err(e) = session(stream, &shared) {
                            debug!("session {peer:?} ended: {e}");
                        }
                    });
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
    });
    Ok(ServerHandle { addr, shared, accept: Some(accept) })
}

fn send_error(w: &mut impl std::io::Write, code: ErrorCode, message: impl Into<String>) -> Result<(), WireError> {
    write_message(w, &Message::Error { code, message: message.into() }).map(|_| ())
}

fn session(stream: TcpStream, shared: &Shared) -> Result<(), WireError> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let db = shared.db.read().expect("database lock poisoned").clone();

    let req = match read_message(&mut reader) {
        Ok((Message::SbbRequest(r), _)) => r,
        Ok((other, _)) => {
            return send_error(&mut writer, ErrorCode::Unexpected, format!("expected request, got kind {}", other.kind()));
        }
        Err(WireError::Version(v)) => {
            return send_error(&mut writer, ErrorCode::VersionMismatch, format!("version {v} not supported"));
        }
        Err(e @ (WireError::Malformed { .. } | WireError::UnknownKind(_) | WireError::TooLarge(_))) => {
            return send_error(&mut writer, ErrorCode::Malformed, e.to_string());
        }
        Err(e) => return Err(e),
    };
    let bucket = match bucket_for(&req, &db.hashes, shared.config.k) {
        Ok(b) => b,
        Err(e) => return send_error(&mut writer, ErrorCode::Malformed, e),
    };
    drop(db);

    match req.mode {
        Mode::Retrieval => {
            write_message(&mut writer, &Message::BucketResponse(bucket))?;
        }
        Mode::Sssp => {
            if bucket.is_empty() {
                write_message(&mut writer, &Message::SsspOffer(Vec::new()))?;
                return Ok(());
            }
            let offer = server_prepare(&bucket, &shared.key, &shared.code)
                .map_err(|e| WireError::Malformed { what: "bucket", reason: e.to_string() })?;
            let members = offer.sketches.into_iter().zip(offer.tokens).collect();
            write_message(&mut writer, &Message::SsspOffer(members))?;
            let blinded = match read_message(&mut reader)? {
                (Message::Blinded(b), _) => b,
                (other, _) => {
                    return send_error(&mut writer, ErrorCode::Unexpected, format!("expected blinded, got kind {}", other.kind()));
                }
            };
            if blinded.len() != bucket.len() {
                return send_error(
                    &mut writer,
                    ErrorCode::Malformed,
                    format!("expected {} elements, got {}", bucket.len(), blinded.len()),
                );
            }
            let Some(elems) = blinded.iter().map(Ristretto::decode).collect::<Option<Vec<_>>>() else {
                return send_error(&mut writer, ErrorCode::Malformed, "invalid group element");
            };
            match server_evaluate(&elems, &shared.key) {
                Ok(ys) => {
                    write_message(&mut writer, &Message::Evaluated(ys.iter().map(Ristretto::encode).collect()))?;
                }
                Err(e) => send_error(&mut writer, ErrorCode::Malformed, e.to_string())?,
            }
        }
    }
    Ok(())
}
