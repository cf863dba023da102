//! Stored chain: kept draws, scalar traces, and run metadata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::state::ParameterState;

/// Dimensions required to reconstruct a chain from its columnar files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDims {
    pub n: usize,
    pub m: usize,
    pub p_fe: usize,
    pub p_re: usize,
    pub p_int: usize,
    pub q_cont: usize,
    pub cat_cardinalities: Vec<usize>,
    pub c_max: usize,
}

/// Run metadata persisted alongside the draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub seed: u64,
    pub stream_id: u64,
    /// Fingerprint of (model spec, hyperparameters) used for the run.
    pub spec_hash: String,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub dims: ChainDims,
    /// Generator position after the final iteration (decimal u128).
    pub rng_word_pos: String,
    /// Full state after the final iteration, for exact resume.
    pub final_state: ParameterState,
}

/// Kept draws (post burn-in, post thinning) plus scalar traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStore {
    pub meta: ChainMeta,
    pub draws: Vec<ParameterState>,
    pub trace_zeta: Vec<f64>,
    pub trace_nclus: Vec<usize>,
    pub trace_sigma2: Vec<f64>,
    pub trace_loglik: Option<Vec<f64>>,
}

impl ChainStore {
    pub fn kept(&self) -> usize {
        self.draws.len()
    }

    /// Trace lengths must equal the kept-draw count.
    pub fn validate(&self) -> Result<()> {
        let h = self.draws.len();
        if self.trace_zeta.len() != h
            || self.trace_nclus.len() != h
            || self.trace_sigma2.len() != h
        {
            return Err(Error::Format(format!(
                "trace lengths ({}, {}, {}) do not match kept draw count {h}",
                self.trace_zeta.len(),
                self.trace_nclus.len(),
                self.trace_sigma2.len()
            )));
        }
        if let Some(ll) = &self.trace_loglik {
            if ll.len() != h {
                return Err(Error::Format(format!(
                    "log-likelihood trace length {} does not match kept draw count {h}",
                    ll.len()
                )));
            }
        }
        Ok(())
    }
}
