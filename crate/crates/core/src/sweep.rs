//! Parameter sweeps over `(d, gamma, k)` reporting privacy, correctness and
//! compression with Student-t intervals across iterations.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{compression_rate, empirical_correctness, pairs_from_neighbors, similar_neighbors};
use crate::bits::PerceptualHash;
use crate::distribution::HashDistribution;
use crate::embedding::EmbeddingParams;
use crate::error::{Error, Result};
use crate::metrics::{accuracy_advantage, auc_advantage, mean_ci, precision_at_recall};
use crate::seed::derived_rng;
use crate::simulation::{run_matching_simulation, MatchingSetting, RepetitionConfig};

pub const MIN_ITERATIONS: usize = 10;
pub const CSV_HEADER: &str = "d,gamma,k,rho,metric,value,ci_low,ci_high";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub d: Vec<usize>,
    pub gamma: Vec<f64>,
    pub k: Vec<usize>,
    /// Similarity thresholds for the correctness column.
    pub t: Vec<u32>,
    /// Recall floors, as fractions.
    pub rho: Vec<f64>,
}

impl SweepGrid {
    /// Cells with `k <= d`, in `d`, `gamma`, `k` order.
    pub fn cells(&self) -> Vec<(usize, f64, usize)> {
        let mut out = Vec::new();
        for &d in &self.d {
            for &gamma in &self.gamma {
                for &k in self.k.iter().filter(|&&k| k <= d) {
                    out.push((d, gamma, k));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub iterations: usize,
    /// Simulated requests per iteration for the privacy metrics.
    pub trials: usize,
    /// Queries per iteration for correctness; each contributes all its similar pairs.
    pub correctness_queries: usize,
    pub compression_trials: usize,
    /// Zero-based popularity rank of the adversary's target.
    pub target_rank: usize,
    pub repetition: RepetitionConfig,
    pub ell: usize,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            iterations: MIN_ITERATIONS,
            trials: 20_000,
            correctness_queries: 2_000,
            compression_trials: 200,
            target_rank: 0,
            repetition: RepetitionConfig::single(),
            ell: crate::bits::HASH_BITS,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub gamma: f64,
    pub k: usize,
    pub rho: Option<f64>,
    pub metric: String,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        let rho = self.rho.map(|r| r.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.d, self.gamma, self.k, rho, self.metric, self.value, self.ci_low, self.ci_high
        )
    }
}

pub fn correctness_metric(t: u32) -> String {
    format!("correctness_t{t}")
}

struct IterationResult {
    prec: Vec<f64>,
    auc: f64,
    acc: f64,
    correctness: Vec<f64>,
    alpha: f64,
}

/// Runs every grid cell for `options.iterations` iterations.
///
/// Each `(cell, iteration)` draws from its own seed derived from the master
/// seed, so output is identical across runs and thread counts. Metrics that
/// are undefined for an iteration (a single-class simulation, say) are left out
/// of that metric's interval.
pub fn run_sweep(
    dist: &HashDistribution,
    db: &[PerceptualHash],
    grid: &SweepGrid,
    options: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    if options.iterations < MIN_ITERATIONS {
        return Err(Error::InvalidParams(format!("at least {MIN_ITERATIONS} iterations required")));
    }
    if db.is_empty() {
        return Err(Error::Empty("database"));
    }
    let ranked = dist.by_popularity();
    let target = *ranked
        .get(options.target_rank)
        .ok_or_else(|| Error::InvalidParams(format!("target rank {} beyond support", options.target_rank)))?;
    let setting = MatchingSetting { target, distribution: dist.clone() };
    let neighbors: Vec<_> = grid.t.iter().map(|&t| similar_neighbors(dist, db, t)).collect();

    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..options.iterations).map(move |i| (c, i))).collect();
    let results: Vec<IterationResult> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let (d, gamma, k) = cells[c];
            let params = EmbeddingParams { d, gamma, k, ell: options.ell };
            params.validate()?;
            let label = format!("sweep/d={d}/gamma={gamma}/k={k}/iter={i}");
            let mut rng = derived_rng(options.seed, &label);
            let scored = run_matching_simulation(dist, &setting, &params, options.repetition, options.trials, &mut rng)?;
            let prec = grid
                .rho
                .iter()
                .map(|&rho| precision_at_recall(&scored, rho).map_or(f64::NAN, |p| p.precision))
                .collect();
            let auc = auc_advantage(&scored).unwrap_or(f64::NAN);
            let acc = accuracy_advantage(&scored)?;
            let correctness = neighbors
                .iter()
                .zip(&grid.t)
                .map(|(n, &t)| {
                    let pairs = pairs_from_neighbors(dist, n, options.correctness_queries, &mut rng);
                    empirical_correctness(&pairs, t, &params, 1, &mut rng).unwrap_or(f64::NAN)
                })
                .collect();
            let alpha = compression_rate(dist, db, &params, options.compression_trials, &mut rng)?;
            Ok(IterationResult { prec, auc, acc, correctness, alpha })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (c, &(d, gamma, k)) in cells.iter().enumerate() {
        let iters = &results[c * options.iterations..(c + 1) * options.iterations];
        let mut push = |rho: Option<f64>, metric: String, values: Vec<f64>| {
            let values: Vec<f64> = values.into_iter().filter(|v| !v.is_nan()).collect();
            if let Ok(e) = mean_ci(&values, 0.95) {
                rows.push(SweepRow { d, gamma, k, rho, metric, value: e.mean, ci_low: e.ci_low, ci_high: e.ci_high });
            }
        };
        for (j, &rho) in grid.rho.iter().enumerate() {
            push(Some(rho), "eps_prec".into(), iters.iter().map(|r| r.prec[j]).collect());
        }
        push(None, "eps_auc".into(), iters.iter().map(|r| r.auc).collect());
        push(None, "eps_acc".into(), iters.iter().map(|r| r.acc).collect());
        for (j, &t) in grid.t.iter().enumerate() {
            push(None, correctness_metric(t), iters.iter().map(|r| r.correctness[j]).collect());
        }
        push(None, "alpha".into(), iters.iter().map(|r| r.alpha).collect());
    }
    Ok(rows)
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

#[derive(Serialize)]
struct PlotData<'a> {
    grid: &'a SweepGrid,
    options: &'a SweepOptions,
    rows: &'a [SweepRow],
}

/// Grid, options and rows as one JSON document for external plotting.
pub fn to_plot_json(grid: &SweepGrid, options: &SweepOptions, rows: &[SweepRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&PlotData { grid, options, rows })?)
}
