//! Clustering and parameter-recovery metrics.

use crate::error::{Error, Result};

fn comb2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

fn dense_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut map = vec![usize::MAX; max + 1];
    let mut next = 0;
    let dense = labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect();
    (dense, next)
}

/// Hubert-Arabie adjusted Rand index from the contingency table. Returns 1
/// when both partitions are trivial in the same way (the chance-corrected
/// denominator vanishes only for identical trivial partitions).
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "label vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Parameter("label vectors are empty".into()));
    }
    let n = a.len();
    let (da, ka) = dense_labels(a);
    let (db, kb) = dense_labels(b);
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for i in 0..n {
        table[da[i] * kb + db[i]] += 1;
        rows[da[i]] += 1;
        cols[db[i]] += 1;
    }
    let index: f64 = table.iter().map(|&c| comb2(c as f64)).sum();
    let sum_a: f64 = rows.iter().map(|&c| comb2(c as f64)).sum();
    let sum_b: f64 = cols.iter().map(|&c| comb2(c as f64)).sum();
    let total = comb2(n as f64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Fraction of observations matching the majority true class of their
/// predicted cluster.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Parameter(format!(
            "label vectors have lengths {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Parameter("label vectors are empty".into()));
    }
    let (dp, kp) = dense_labels(pred);
    let (dt, kt) = dense_labels(truth);
    let mut table = vec![0u64; kp * kt];
    for i in 0..pred.len() {
        table[dp[i] * kt + dt[i]] += 1;
    }
    let correct: u64 = (0..kp)
        .map(|c| (0..kt).map(|t| table[c * kt + t]).max().unwrap_or(0))
        .sum();
    Ok(correct as f64 / pred.len() as f64)
}

/// Relative root-mean-square error: |estimate - truth| / |truth| in the
/// Euclidean (Frobenius, for flattened matrices) norm.
pub fn relative_rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Parameter(format!(
            "estimate has {} entries, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    let norm_truth: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm_truth > 0.0) {
        return Err(Error::Parameter(
            "relative RMSE is undefined for a zero-norm truth".into(),
        ));
    }
    let err: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum::<f64>()
        .sqrt();
    Ok(err / norm_truth)
}
