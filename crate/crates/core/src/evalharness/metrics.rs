use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numkernel::dot;

/// Retrieval scores for a square similarity matrix whose diagonal holds the
/// true pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalMetrics {
    pub recall_at: BTreeMap<usize, f64>,
    pub mean_rank: f64,
    pub ranks: Vec<usize>,
}

fn check_square(sim: &[Vec<f64>], ks: &[usize]) -> Result<usize> {
    let n = sim.len();
    if n == 0 {
        return Err(Error::Empty("similarity matrix"));
    }
    if let Some(row) = sim.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "similarity matrix must be square",
            expected: n,
            actual: row.len(),
        });
    }
    if sim.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("similarity matrix".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::InsufficientData(format!("pool of {n} cannot score recall@{k}")));
    }
    Ok(n)
}

fn summarize(ranks: Vec<usize>, ks: &[usize]) -> RetrievalMetrics {
    let n = ranks.len() as f64;
    let recall_at = ks
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    let mean_rank = ranks.iter().sum::<usize>() as f64 / n;
    RetrievalMetrics {
        recall_at,
        mean_rank,
        ranks,
    }
}

/// Rank of the true candidate in each row: one plus the number of candidates
/// scoring strictly higher plus the tied candidates with a lower index.
pub fn true_ranks(sim: &[Vec<f64>]) -> Result<Vec<usize>> {
    check_square(sim, &[])?;
    Ok(sim
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let s = row[i];
            1 + row
                .iter()
                .enumerate()
                .filter(|&(j, &v)| v > s || (v == s && j < i))
                .count()
        })
        .collect())
}

pub fn retrieval_metrics(sim: &[Vec<f64>], ks: &[usize]) -> Result<RetrievalMetrics> {
    check_square(sim, ks)?;
    Ok(summarize(true_ranks(sim)?, ks))
}

/// Reference implementation: fully sorts every row (descending, lower index
/// first on ties) and locates the true candidate.
pub fn metrics_bruteforce_oracle(sim: &[Vec<f64>], ks: &[usize]) -> Result<RetrievalMetrics> {
    check_square(sim, ks)?;
    let ranks = sim
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
            order.iter().position(|&j| j == i).unwrap() + 1
        })
        .collect();
    Ok(summarize(ranks, ks))
}

/// Mean of `1 - cos(u_i, v_i)` over paired unit vectors.
pub fn cosine_loss(u: &[Vec<f32>], v: &[Vec<f32>]) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::Empty("cosine loss pairs"));
    }
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "cosine loss pairs",
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(u.iter().zip(v).map(|(a, b)| 1.0 - dot(a, b)).sum::<f64>() / u.len() as f64)
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "predictions vs labels",
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    Ok(predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
