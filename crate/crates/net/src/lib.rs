//! The two-stage query flow over TCP: the client sends a coarse embedding,
//! the server answers with its bucket (retrieval mode) or runs the sketch
//! protocol over it (sssp mode).

pub mod bench;
pub mod client;
pub mod server;
pub mod wire;

pub use client::{query, ClientError, QueryOutcome, SessionMetrics};
pub use server::{bucket_for, serve, Database, ServerConfig, ServerHandle};
pub use wire::{Message, Mode, SbbRequest, WireError, PROTOCOL_VERSION};
