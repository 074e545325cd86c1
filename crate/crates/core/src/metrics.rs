//! Adversarial-advantage metrics over scored requests.
//!
//! Each scored request carries the adversary's posterior and the true value of
//! the predicate. Threshold sweeps consider every distinct score; requests with
//! equal scores always fall on the same side of a threshold.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredRequest {
    pub score: f64,
    pub label: bool,
}

impl ScoredRequest {
    pub fn new(score: f64, label: bool) -> Self {
        Self { score, label }
    }
}

/// Cumulative `(score, true_positives, false_positives)` after each group of
/// equal scores, scanning from the highest score down.
fn sweep(scored: &[ScoredRequest]) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<&ScoredRequest> = scored.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, r) in sorted.iter().enumerate() {
        if r.label {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = sorted.get(i + 1).is_none_or(|n| n.score != r.score);
        if group_ends {
            out.push((r.score, tp, fp));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAtRecall {
    pub precision: f64,
    /// Lowest score flagged positive.
    pub threshold: f64,
    pub recall: f64,
}

/// Best precision over thresholds whose recall exceeds `rho`; `rho >= 1`
/// demands full recall.
///
/// Among thresholds with equal precision the highest is reported.
pub fn precision_at_recall(scored: &[ScoredRequest], rho: f64) -> Result<PrecisionAtRecall> {
    let positives = scored.iter().filter(|r| r.label).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut best: Option<PrecisionAtRecall> = None;
    for (score, tp, fp) in sweep(scored) {
        let recall = tp as f64 / positives as f64;
        let feasible = if rho >= 1.0 { tp == positives } else { recall > rho };
        if !feasible {
            continue;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        if best.is_none_or(|b| precision > b.precision) {
            best = Some(PrecisionAtRecall { precision, threshold: score, recall });
        }
    }
    // the lowest threshold always reaches full recall
    Ok(best.expect("full-recall threshold is always feasible"))
}

/// `2 AUC - 1`, with AUC from the Mann-Whitney statistic (ties count one half).
pub fn auc_advantage(scored: &[ScoredRequest]) -> Result<f64> {
    let positives = scored.iter().filter(|r| r.label).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted: Vec<&ScoredRequest> = scored.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    // sum of midranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].score == sorted[i].score {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * sorted[i..=j].iter().filter(|r| r.label).count() as f64;
        i = j + 1;
    }
    let p = positives as f64;
    let auc = (rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64);
    Ok(2.0 * auc - 1.0)
}

/// Improvement of the best single-threshold accuracy over always guessing the
/// majority class, normalized to `[0, 1]`.
pub fn accuracy_advantage(scored: &[ScoredRequest]) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::Empty("scored requests"));
    }
    let n = scored.len();
    let positives = scored.iter().filter(|r| r.label).count();
    let negatives = n - positives;
    let base = positives.max(negatives) as f64 / n as f64;
    if base >= 1.0 {
        return Ok(0.0);
    }
    let best_correct = sweep(scored)
        .into_iter()
        .map(|(_, tp, fp)| tp + negatives - fp)
        .fold(negatives, usize::max);
    let acc = best_correct as f64 / n as f64;
    Ok(((acc - base) / (1.0 - base)).max(0.0))
}

/// Sample mean with a two-sided Student-t confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

pub fn mean_ci(values: &[f64], level: f64) -> Result<Estimate> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Empty("estimate samples"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Estimate { mean, ci_low: mean, ci_high: mean, n });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::InvalidParams(e.to_string()))?
        .inverse_cdf(0.5 + level / 2.0);
    let half = t * (var / n as f64).sqrt();
    Ok(Estimate { mean, ci_low: mean - half, ci_high: mean + half, n })
}
