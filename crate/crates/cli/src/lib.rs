//! The `sbb` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbb_core::io::{database_to_text, read_database, read_workload, workload_to_csv};
use sbb_core::metrics::mean_ci;
use sbb_core::seed::derived_rng;
use sbb_core::simulation::neighborhood_distribution;
use sbb_core::sweep::{run_sweep, to_csv, to_plot_json, SweepGrid, SweepOptions, SweepRow};
use sbb_core::synthetic::{generate_synthetic, SyntheticConfig};
use sbb_core::{
    accuracy_advantage, auc_advantage, compute_coarse_pdq, compute_hash, emb_lsh, induced_distribution,
    precision_at_recall, run_matching_simulation, DeterministicEmbedder, EmbeddingParams, HashDistribution,
    LuminanceImage, MatchingSetting, PerceptualHash, RepetitionConfig, RepetitionMode, WorkloadRecord,
};
use sbb_crypto::OprfKey;
use sbb_net::bench::{bench, bench_csv, BenchConfig};
use sbb_net::{query, serve, Database, Mode, ServerConfig};

pub type Result<T> = std::result::Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Debug, Parser)]
#[command(name = "sbb", version, about = "Similarity-based bucketization toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Perceptual hash of an image (PGM, PNG or JPEG).
    Hash {
        path: PathBuf,
        /// Print the 16-bit coarse hash instead.
        #[arg(long)]
        coarse: bool,
    },
    /// Coarse embedding of a hash, one `index<TAB>bit` line per revealed position.
    Embed {
        hash: PerceptualHash,
        #[arg(long, default_value_t = 9)]
        d: usize,
        #[arg(long, default_value_t = 0.05)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// 64-hex PRF key for the derandomized embedding.
        #[arg(long)]
        key: Option<String>,
    },
    /// Generate a synthetic workload and database.
    Synth {
        /// SyntheticConfig JSON; the default configuration otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the workload CSV; stdout otherwise.
        #[arg(long)]
        workload_out: Option<PathBuf>,
        #[arg(long)]
        db_out: Option<PathBuf>,
        /// Print the effective configuration as JSON and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Request mass by T-neighborhood size.
    Neighborhood {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1u32, 8, 16, 32])]
        t: Vec<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Matching-attack simulation for one parameter setting.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Target hash; defaults to the hash at `--target-rank`.
        #[arg(long)]
        target: Option<PerceptualHash>,
        #[arg(long, default_value_t = 0)]
        target_rank: usize,
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[arg(long, default_value_t = 1)]
        q: usize,
        #[arg(long, default_value = "fixed-index")]
        repetition: RepetitionMode,
        #[arg(long, default_value_t = 20_000)]
        trials: usize,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.25, 0.5, 0.75, 1.0])]
        rho: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid sweep of privacy, correctness and compression.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_delimiter = ',', default_values_t = vec![9usize])]
        d: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.05])]
        gamma: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 3])]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![32u32])]
        t: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.25, 0.5, 0.75, 1.0])]
        rho: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = 20_000)]
        trials: usize,
        #[arg(long, default_value_t = 2_000)]
        correctness_queries: usize,
        #[arg(long, default_value_t = 200)]
        compression_trials: usize,
        #[arg(long, default_value_t = 0)]
        target_rank: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write plot data as JSON.
        #[arg(long)]
        plot_json: Option<PathBuf>,
    },
    /// Serve a hash database.
    Serve {
        /// One 64-hex hash per line, optionally followed by a tab and an id.
        #[arg(long)]
        db: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Seed for the OPRF key; random when absent.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Query a server for an image or hash.
    Query {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        #[arg(long, conflicts_with = "image", required_unless_present = "image")]
        hash: Option<PerceptualHash>,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = 9)]
        d: usize,
        #[arg(long, default_value_t = 0.05)]
        gamma: f64,
        #[arg(long, default_value_t = 32)]
        t: u32,
        #[arg(long, default_value = "retrieval")]
        mode: Mode,
        /// Ask for the whole database instead of a bucket.
        #[arg(long)]
        no_sbb: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time and bandwidth with and without bucketization on synthetic databases.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize << 12, 1 << 16])]
        sizes: Vec<usize>,
        #[command(flatten)]
        embedding: EmbeddingArgs,
        #[arg(long, default_value_t = 32)]
        t: u32,
        #[arg(long, default_value = "retrieval")]
        mode: Mode,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 1 << 14)]
        sssp_full_limit: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct EmbeddingArgs {
    #[arg(long, default_value_t = 9)]
    pub d: usize,
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
}

impl EmbeddingArgs {
    fn params(&self) -> Result<EmbeddingParams> {
        Ok(EmbeddingParams::new(self.d, self.gamma, self.k)?)
    }
}

/// Where the workload (and database) come from.
#[derive(Debug, Args)]
pub struct Source {
    /// Workload as CSV (`hash,count`) or JSON Lines.
    #[arg(long, conflicts_with = "synthetic")]
    pub workload: Option<PathBuf>,
    /// Database file; defaults to the distinct workload hashes.
    #[arg(long, requires = "workload")]
    pub db: Option<PathBuf>,
    /// SyntheticConfig JSON to generate from. With neither this nor `--workload`, the default config is used.
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
}

impl Source {
    pub fn load(&self) -> Result<(Vec<WorkloadRecord>, Vec<PerceptualHash>)> {
        if let Some(path) = &self.workload {
            let workload = read_workload(path)?;
            let db = match &self.db {
                Some(p) => read_database(p)?.into_iter().map(|e| e.hash).collect(),
                None => workload.iter().map(|r| r.hash).collect(),
            };
            return Ok((workload, db));
        }
        let config = load_config(self.synthetic.as_deref())?;
        let data = generate_synthetic(&config)?;
        Ok((data.workload, data.database))
    }
}

fn load_config(path: Option<&Path>) -> Result<SyntheticConfig> {
    match path {
        Some(p) => Ok(SyntheticConfig::from_json(&fs::read_to_string(p)?)?),
        None => Ok(SyntheticConfig::default()),
    }
}

pub fn load_image(path: &Path) -> Result<LuminanceImage> {
    let is_pgm = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        return Ok(LuminanceImage::from_pgm(&fs::read(path)?)?);
    }
    let rgb = image::open(path)?.to_rgb8();
    Ok(LuminanceImage::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())?)
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_key(hex: &str) -> Result<[u8; 32]> {
    let h: PerceptualHash = hex.parse()?;
    Ok(h.to_bytes())
}

/// Privacy rows for one setting: `eps_prec` per recall floor, then `eps_auc` and `eps_acc`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_rows(
    dist: &HashDistribution,
    target: PerceptualHash,
    params: &EmbeddingParams,
    rep: RepetitionConfig,
    trials: usize,
    iterations: usize,
    rho: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let setting = MatchingSetting { target, distribution: dist.clone() };
    let mut prec = vec![Vec::new(); rho.len()];
    let (mut auc, mut acc) = (Vec::new(), Vec::new());
    for i in 0..iterations {
        let mut rng = derived_rng(seed, &format!("simulate/iter={i}"));
        let scored = run_matching_simulation(dist, &setting, params, rep, trials, &mut rng)?;
        for (p, &r) in prec.iter_mut().zip(rho) {
            if let Ok(v) = precision_at_recall(&scored, r) {
                p.push(v.precision);
            }
        }
        if let Ok(v) = auc_advantage(&scored) {
            auc.push(v);
        }
        acc.push(accuracy_advantage(&scored)?);
    }
    let row = |rho: Option<f64>, metric: &str, values: &[f64]| -> Option<SweepRow> {
        let e = mean_ci(values, 0.95).ok()?;
        Some(SweepRow {
            d: params.d,
            gamma: params.gamma,
            k: params.k,
            rho,
            metric: metric.into(),
            value: e.mean,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
        })
    };
    let mut rows: Vec<SweepRow> = rho.iter().zip(&prec).filter_map(|(&r, v)| row(Some(r), "eps_prec", v)).collect();
    rows.extend(row(None, "eps_auc", &auc));
    rows.extend(row(None, "eps_acc", &acc));
    Ok(rows)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Hash { path, coarse } => {
            let img = load_image(&path)?;
            if coarse {
                writeln!(out, "{:04x}", compute_coarse_pdq(&img)?.0)?;
            } else {
                writeln!(out, "{}", compute_hash(&img)?)?;
            }
        }
        Command::Embed { hash, d, gamma, seed, key } => {
            let params = EmbeddingParams::new(d, gamma, 0)?;
            let emb = match key {
                Some(k) => DeterministicEmbedder::new(parse_key(&k)?).embed(&hash, &params),
                None => emb_lsh(&hash, &params, &mut ChaCha8Rng::seed_from_u64(seed)),
            };
            for (i, b) in emb.index_set.indices().iter().zip(&emb.bits) {
                writeln!(out, "{i}\t{}", u8::from(*b))?;
            }
        }
        Command::Synth { config, workload_out, db_out, print_config } => {
            let config = load_config(config.as_deref())?;
            if print_config {
                writeln!(out, "{}", serde_json::to_string_pretty(&config)?)?;
                return Ok(());
            }
            let data = generate_synthetic(&config)?;
            emit(out, workload_out.as_deref(), &workload_to_csv(&data.workload))?;
            if let Some(p) = db_out {
                fs::write(p, database_to_text(&data.database))?;
            }
            log::info!("{} database hashes, {} requested", data.database.len(), data.workload.len());
        }
        Command::Neighborhood { source, t, out: path } => {
            let (workload, _) = source.load()?;
            let mut text = String::from("t,bin,fraction\n");
            for t in t {
                let bins = neighborhood_distribution(&workload, t)?;
                for (name, v) in ["1", "2-10", "11-100", ">100"].iter().zip(bins) {
                    text.push_str(&format!("{t},{name},{v}\n"));
                }
            }
            emit(out, path.as_deref(), &text)?;
        }
        Command::Simulate {
            source,
            target,
            target_rank,
            embedding,
            q,
            repetition,
            trials,
            iterations,
            rho,
            seed,
            out: path,
        } => {
            let (workload, _) = source.load()?;
            let dist = induced_distribution(&workload)?;
            let target = match target {
                Some(t) => t,
                None => *dist.by_popularity().get(target_rank).ok_or("target rank beyond workload support")?,
            };
            let rep = RepetitionConfig::new(q, repetition)?;
            let rows = simulate_rows(&dist, target, &embedding.params()?, rep, trials, iterations, &rho, seed)?;
            emit(out, path.as_deref(), &to_csv(&rows))?;
        }
        Command::Sweep {
            source,
            d,
            gamma,
            k,
            t,
            rho,
            iterations,
            trials,
            correctness_queries,
            compression_trials,
            target_rank,
            seed,
            out: path,
            plot_json,
        } => {
            let (workload, db) = source.load()?;
            let dist = induced_distribution(&workload)?;
            let grid = SweepGrid { d, gamma, k, t, rho };
            let options = SweepOptions {
                iterations,
                trials,
                correctness_queries,
                compression_trials,
                target_rank,
                seed,
                ..Default::default()
            };
            let rows = run_sweep(&dist, &db, &grid, &options)?;
            emit(out, path.as_deref(), &to_csv(&rows))?;
            if let Some(p) = plot_json {
                fs::write(p, to_plot_json(&grid, &options, &rows)?)?;
            }
        }
        Command::Serve { db, addr, k, seed } => {
            let hashes: Vec<_> = read_database(&db)?.into_iter().map(|e| e.hash).collect();
            let key = match seed {
                Some(s) => OprfKey::random(&mut derived_rng(s, "serve/oprf-key")),
                None => OprfKey::random(&mut rand::rng()),
            };
            let n = hashes.len();
            let server = serve(addr.as_str(), Database::new(hashes), ServerConfig { k }, key)?;
            writeln!(out, "serving {n} hashes on {} with k = {k}", server.local_addr())?;
            out.flush()?;
            server.wait();
        }
        Command::Query { addr, hash, image, d, gamma, t, mode, no_sbb, seed } => {
            let hash = match (hash, image) {
                (Some(h), _) => h,
                (None, Some(p)) => compute_hash(&load_image(&p)?)?,
                (None, None) => return Err("either --hash or --image is required".into()),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let emb = if no_sbb {
                None
            } else {
                Some(emb_lsh(&hash, &EmbeddingParams::new(d, gamma, 0)?, &mut rng))
            };
            let outcome = query(addr.as_str(), &hash, emb.as_ref(), mode, t, &mut rng)?;
            writeln!(
                out,
                "matched={} bucket_size={} response_body_bytes={}",
                outcome.matched, outcome.bucket_size, outcome.metrics.response_body_bytes
            )?;
            writeln!(out, "phase,millis,bytes_sent,bytes_received")?;
            for p in &outcome.metrics.phases {
                writeln!(out, "{},{:.3},{},{}", p.name, p.millis, p.bytes_sent, p.bytes_received)?;
            }
            let m = &outcome.metrics;
            let sent: usize = m.phases.iter().map(|p| p.bytes_sent).sum();
            let received: usize = m.phases.iter().map(|p| p.bytes_received).sum();
            writeln!(out, "total,{:.3},{sent},{received}", m.total_millis())?;
        }
        Command::Bench { sizes, embedding, t, mode, reps, sssp_full_limit, seed, out: path } => {
            let config = BenchConfig {
                sizes,
                params: embedding.params()?,
                mode,
                repetitions: reps,
                t,
                shape: SyntheticConfig { seed, ..Default::default() },
                sssp_full_limit,
            };
            let rows = bench(&config, seed);
            emit(out, path.as_deref(), &bench_csv(mode, &rows))?;
        }
    }
    Ok(())
}
