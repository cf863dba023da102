//! Trace diagnostics: moments, lag-1 autocorrelation, and effective sample
//! size via the initial-positive-sequence estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::chain::ChainStore;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceSummary {
    pub mean: f64,
    pub sd: f64,
    pub lag1_autocorr: f64,
    pub ess: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub kept: usize,
    pub zeta: TraceSummary,
    pub non_empty_clusters: TraceSummary,
    pub sigma2: TraceSummary,
}

fn autocovariance(xs: &[f64], mean: f64, lag: usize) -> f64 {
    let n = xs.len();
    (0..n - lag)
        .map(|t| (xs[t] - mean) * (xs[t + lag] - mean))
        .sum::<f64>()
        / n as f64
}

/// Effective sample size by Geyer's initial positive sequence: sum paired
/// autocovariances Gamma_k = gamma_{2k} + gamma_{2k+1} while positive.
/// A constant trace reports ESS = N by convention.
pub fn ess(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return n as f64;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = autocovariance(xs, mean, 0);
    if var <= 0.0 {
        return n as f64;
    }
    let mut tau = -var;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = autocovariance(xs, mean, 2 * k) + autocovariance(xs, mean, 2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    // Cap super-efficiency so antithetic traces report a finite ESS.
    let iact = (tau / var).max(0.1);
    n as f64 / iact
}

/// Mean, standard deviation, lag-1 autocorrelation, and ESS of one trace.
/// A constant trace reports autocorrelation 0 and ESS = length.
pub fn trace_summary(xs: &[f64]) -> TraceSummary {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = autocovariance(xs, mean, 0);
    let lag1 = if var > 0.0 && n > 1 {
        autocovariance(xs, mean, 1) / var
    } else {
        0.0
    };
    TraceSummary {
        mean,
        sd: var.max(0.0).sqrt(),
        lag1_autocorr: lag1,
        ess: ess(xs),
    }
}

/// Summaries of the stored global traces.
pub fn diagnostics(chain: &ChainStore) -> Result<DiagnosticsReport> {
    if chain.kept() == 0 {
        return Err(Error::Spec(
            "diagnostics need a chain with at least one kept draw".into(),
        ));
    }
    let nclus: Vec<f64> = chain.trace_nclus.iter().map(|&v| v as f64).collect();
    Ok(DiagnosticsReport {
        kept: chain.kept(),
        zeta: trace_summary(&chain.trace_zeta),
        non_empty_clusters: trace_summary(&nclus),
        sigma2: trace_summary(&chain.trace_sigma2),
    })
}
