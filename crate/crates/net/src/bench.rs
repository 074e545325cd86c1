//! End-to-end timing and bandwidth with and without bucketization.

use std::fmt::Write as _;

use rand::Rng;
use sbb_core::seed::derived_rng;
use sbb_core::synthetic::{generate_database, perturb, SyntheticConfig};
use sbb_core::{emb_lsh, EmbeddingParams};
use sbb_crypto::OprfKey;
use serde::Serialize;

use crate::client::query;
use crate::server::{serve, Database, ServerConfig};
use crate::wire::Mode;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub params: EmbeddingParams,
    pub mode: Mode,
    pub repetitions: usize,
    pub t: u32,
    pub shape: SyntheticConfig,
    /// Whole-database SSSP above this size is skipped.
    pub sssp_full_limit: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchCell {
    pub db_size: usize,
    pub sbb: bool,
    pub mean_ms: f64,
    pub mean_bytes: f64,
    pub mean_response_body_bytes: f64,
    pub mean_bucket: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub with_sbb: BenchCell,
    pub without_sbb: BenchCell,
}

impl BenchRow {
    /// No-SBB time over SBB time, when both ran.
    pub fn speedup(&self) -> Option<f64> {
        match (&self.with_sbb.error, &self.without_sbb.error) {
            (None, None) => Some(self.without_sbb.mean_ms / self.with_sbb.mean_ms),
            _ => None,
        }
    }

    /// SBB response bytes over no-SBB response bytes.
    pub fn bandwidth_ratio(&self) -> Option<f64> {
        match (&self.with_sbb.error, &self.without_sbb.error) {
            (None, None) => Some(self.with_sbb.mean_response_body_bytes / self.without_sbb.mean_response_body_bytes),
            _ => None,
        }
    }
}

fn failed(db_size: usize, sbb: bool, e: String) -> BenchCell {
    BenchCell { db_size, sbb, mean_ms: f64::NAN, mean_bytes: f64::NAN, mean_response_body_bytes: f64::NAN, mean_bucket: f64::NAN, error: Some(e) }
}

/// Benchmarks one database size against a fresh local server.
pub fn bench_size(config: &BenchConfig, size: usize, seed: u64) -> BenchRow {
    let db = match generate_database(&config.shape, size) {
        Ok(db) => db,
        Err(e) => return BenchRow { with_sbb: failed(size, true, e.to_string()), without_sbb: failed(size, false, e.to_string()) },
    };
    let mut rng = derived_rng(seed, &format!("bench/{size}"));
    let server = match serve(
        "127.0.0.1:0",
        Database::new(db.clone()),
        ServerConfig { k: config.params.k },
        OprfKey::random(&mut rng),
    ) {
        Ok(s) => s,
        Err(e) => return BenchRow { with_sbb: failed(size, true, e.to_string()), without_sbb: failed(size, false, e.to_string()) },
    };
    let addr = server.local_addr();
    let queries: Vec<_> = (0..config.repetitions + 1)
        .map(|_| {
            let member = db[rng.random_range(0..db.len())];
            let w = rng.random_range(0..=config.t / 2);
            perturb(&member, w, &mut rng)
        })
        .collect();

    let mut run = |sbb: bool| -> BenchCell {
        if !sbb && config.mode == Mode::Sssp && size > config.sssp_full_limit {
            return failed(size, sbb, format!("whole-database sssp skipped above {}", config.sssp_full_limit));
        }
        let (mut ms, mut bytes, mut body, mut bucket) = (0.0, 0.0, 0.0, 0.0);
        // the first query warms up caches and is not counted
        for (i, q) in queries.iter().enumerate() {
            let emb = sbb.then(|| emb_lsh(q, &config.params, &mut rng));
            match query(addr, q, emb.as_ref(), config.mode, config.t, &mut rng) {
                Ok(out) if i > 0 => {
                    ms += out.metrics.total_millis();
                    bytes += out.metrics.total_bytes() as f64;
                    body += out.metrics.response_body_bytes as f64;
                    bucket += out.bucket_size as f64;
                }
                Ok(_) => {}
                Err(e) => return failed(size, sbb, e.to_string()),
            }
        }
        let n = config.repetitions.max(1) as f64;
        BenchCell { db_size: size, sbb, mean_ms: ms / n, mean_bytes: bytes / n, mean_response_body_bytes: body / n, mean_bucket: bucket / n, error: None }
    };
    let with_sbb = run(true);
    let without_sbb = run(false);
    server.shutdown();
    BenchRow { with_sbb, without_sbb }
}

pub fn bench(config: &BenchConfig, seed: u64) -> Vec<BenchRow> {
    config.sizes.iter().map(|&s| bench_size(config, s, seed)).collect()
}

pub const BENCH_CSV_HEADER: &str =
    "db_size,mode,sbb,mean_ms,mean_bytes,mean_response_body_bytes,mean_bucket,speedup,error";

pub fn bench_csv(mode: Mode, rows: &[BenchRow]) -> String {
    let mode = match mode {
        Mode::Retrieval => "retrieval",
        Mode::Sssp => "sssp",
    };
    let mut out = format!("{BENCH_CSV_HEADER}\n");
    for row in rows {
        let speedup = row.speedup().map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into());
        for c in [&row.with_sbb, &row.without_sbb] {
            let cell = |v: f64| if c.error.is_some() { "-".to_string() } else { format!("{v:.3}") };
            let _ = writeln!(
                out,
                "{},{mode},{},{},{},{},{},{},{}",
                c.db_size,
                c.sbb,
                cell(c.mean_ms),
                cell(c.mean_bytes),
                cell(c.mean_response_body_bytes),
                cell(c.mean_bucket),
                if c.sbb { speedup.as_str() } else { "" },
                c.error.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
    }
    out
}
