//! Gibbs loop orchestration: block ordering, burn-in and thinning,
//! persistence metadata, progress reporting, and multi-chain execution.

pub mod diagnostics;
pub mod geweke;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditionals::{
    cluster_sufficient_stats, observed_data_loglik, update_allocations,
    update_assignment_params, update_beta_gamma_joint, update_concentration,
    update_random_effects, update_sigma_with_rate_scale, update_weights, update_wint, update_wre,
};
use crate::error::{Error, Result};
use crate::model::chain::{ChainDims, ChainMeta, ChainStore};
use crate::model::design::{build_design_views, rows_by_cluster, DesignViews};
use crate::model::spec::{Hyperparameters, ModelSpec};
use crate::model::state::{init_state_with_views, ParameterState};
use crate::model::store::fingerprint;
use crate::model::LongitudinalDataset;
use crate::stochastics::RngStream;

pub use diagnostics::{diagnostics, trace_summary, DiagnosticsReport, TraceSummary};
pub use geweke::{getting_it_right, Fault, GewekeConfig, GewekeReport};

/// Run-time configuration of one sampling run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub record_loglik: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iterations: 15_000,
            burn_in: 5_000,
            thin: 1,
            seed: 1,
            n_chains: 1,
            record_loglik: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Spec("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Spec(format!(
                "burn_in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Spec("thin must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::Spec("n_chains must be at least 1".into()));
        }
        Ok(())
    }
}

/// Progress snapshot emitted during a run.
#[derive(Clone, Copy, Debug)]
pub struct ProgressEvent {
    pub iteration: usize,
    pub iterations: usize,
    pub non_empty_clusters: usize,
    pub zeta: f64,
}

/// Per-sweep options; the defaults run the exact sampler.
pub struct SweepOptions<'a> {
    /// Keep the allocations fixed (two-step benchmark fits).
    pub frozen_z: Option<&'a [usize]>,
    /// Fault-injection knob for the error-variance block (see
    /// [`crate::conditionals::update_sigma_with_rate_scale`]).
    pub sigma_rate_scale: f64,
}

impl Default for SweepOptions<'_> {
    fn default() -> Self {
        Self {
            frozen_z: None,
            sigma_rate_scale: 1.0,
        }
    }
}

fn with_context(err: Error, iteration: usize, block: &str) -> Error {
    let ctx = format!("iteration {iteration}, block {block}");
    match err {
        Error::NotPositiveDefinite { site } => Error::NotPositiveDefinite {
            site: format!("{ctx}: {site}"),
        },
        Error::Numerical(msg) => Error::Numerical(format!("{ctx}: {msg}")),
        Error::Parameter(msg) => Error::Parameter(format!("{ctx}: {msg}")),
        other => other,
    }
}

/// One full sweep in block order a (assignment parameters), b (LMM
/// parameters), c (allocations, weights, concentration).
pub fn gibbs_sweep(
    state: &mut ParameterState,
    y: &DVector<f64>,
    views: &DesignViews,
    hyper: &Hyperparameters,
    opts: &SweepOptions,
    rng: &mut RngStream,
) -> Result<()> {
    let c_max = state.c_max();

    // a) cluster structure parameters
    let stats = cluster_sufficient_stats(views, &state.z, c_max);
    state.theta_u = update_assignment_params(&stats, hyper, rng)?;

    // b) LMM parameters
    let cluster_rows = rows_by_cluster(&state.z, c_max);
    let (beta, gamma) = update_beta_gamma_joint(
        y,
        views,
        &cluster_rows,
        &state.eta,
        state.sigma2,
        &state.w_int,
        hyper,
        rng,
    )?;
    state.beta = beta;
    state.gamma = gamma;
    state.sigma2 = update_sigma_with_rate_scale(
        y,
        views,
        &state.beta,
        &state.gamma,
        &state.eta,
        &state.z,
        hyper,
        opts.sigma_rate_scale,
        rng,
    )?;
    state.eta = update_random_effects(
        y,
        views,
        &state.beta,
        &state.gamma,
        &state.z,
        state.sigma2,
        &state.w_re,
        rng,
    )?;
    state.w_re = update_wre(&state.eta, hyper, rng)?;
    state.w_int = update_wint(&state.gamma, hyper, rng)?;

    // c) assignment parameters
    match opts.frozen_z {
        Some(z) => state.z = z.to_vec(),
        None => state.z = update_allocations(y, views, state, rng)?,
    }
    let (v, pi) = update_weights(&state.z, state.zeta, c_max, rng)?;
    state.v = v;
    state.pi = pi;
    state.zeta = update_concentration(&state.v, hyper, rng)?;
    Ok(())
}

/// Options for [`run_chain_with_options`].
pub struct ChainOptions<'a> {
    pub stream_id: u64,
    pub frozen_z: Option<&'a [usize]>,
    pub progress: Option<Box<dyn FnMut(ProgressEvent) + Send + 'a>>,
    /// Resume point: previously kept draws, the final state, the generator
    /// position, and the iteration count already consumed.
    pub resume: Option<&'a ChainStore>,
}

impl Default for ChainOptions<'_> {
    fn default() -> Self {
        Self {
            stream_id: 0,
            frozen_z: None,
            progress: None,
            resume: None,
        }
    }
}

/// Run one chain with the Algorithm-ordered sweep, keeping post burn-in
/// thinned draws and the scalar traces.
pub fn run_chain(
    data: &LongitudinalDataset,
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    runcfg: &RunConfig,
) -> Result<ChainStore> {
    run_chain_with_options(data, spec, hyper, runcfg, ChainOptions::default())
}

pub fn run_chain_with_options(
    data: &LongitudinalDataset,
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    runcfg: &RunConfig,
    mut opts: ChainOptions,
) -> Result<ChainStore> {
    runcfg.validate()?;
    let views = build_design_views(data, spec)?;
    let mut rng = RngStream::new(runcfg.seed, opts.stream_id);

    let (mut state, start_iteration, mut draws, mut trace_zeta, mut trace_nclus, mut trace_sigma2, mut trace_loglik) =
        match opts.resume {
            Some(prev) => {
                if prev.meta.seed != runcfg.seed || prev.meta.stream_id != opts.stream_id {
                    return Err(Error::Spec(
                        "resume requires the same seed and stream id as the stored chain".into(),
                    ));
                }
                if prev.meta.iterations >= runcfg.iterations {
                    return Err(Error::Spec(format!(
                        "resume target {} must exceed the {} iterations already run",
                        runcfg.iterations, prev.meta.iterations
                    )));
                }
                let pos: u128 = prev.meta.rng_word_pos.parse().map_err(|_| {
                    Error::Format("chain metadata holds an invalid rng position".into())
                })?;
                rng.set_word_pos(pos);
                (
                    prev.meta.final_state.clone(),
                    prev.meta.iterations,
                    prev.draws.clone(),
                    prev.trace_zeta.clone(),
                    prev.trace_nclus.clone(),
                    prev.trace_sigma2.clone(),
                    prev.trace_loglik.clone(),
                )
            }
            None => {
                let mut state = init_state_with_views(data.y(), &views, spec, hyper, &mut rng)?;
                if let Some(z) = opts.frozen_z {
                    if z.len() != views.n {
                        return Err(Error::Spec(format!(
                            "frozen allocation has {} entries, expected {}",
                            z.len(),
                            views.n
                        )));
                    }
                    if let Some(&bad) = z.iter().find(|&&c| c >= spec.c_max) {
                        return Err(Error::Spec(format!(
                            "frozen allocation label {bad} exceeds C = {}",
                            spec.c_max
                        )));
                    }
                    state.z = z.to_vec();
                }
                let loglik = if runcfg.record_loglik { Some(Vec::new()) } else { None };
                (state, 0, Vec::new(), Vec::new(), Vec::new(), Vec::new(), loglik)
            }
        };

    let sweep_opts = SweepOptions {
        frozen_z: opts.frozen_z,
        sigma_rate_scale: 1.0,
    };
    let report_every = (runcfg.iterations / 20).max(1);
    for k in (start_iteration + 1)..=runcfg.iterations {
        gibbs_sweep(&mut state, data.y(), &views, hyper, &sweep_opts, &mut rng)
            .map_err(|e| with_context(e, k, "gibbs_sweep"))?;
        if k > runcfg.burn_in && (k - runcfg.burn_in - 1) % runcfg.thin == 0 {
            trace_zeta.push(state.zeta);
            trace_nclus.push(state.non_empty_clusters());
            trace_sigma2.push(state.sigma2);
            if let Some(ll) = trace_loglik.as_mut() {
                ll.push(
                    observed_data_loglik(data.y(), &views, &state)
                        .map_err(|e| with_context(e, k, "loglik"))?,
                );
            }
            draws.push(state.clone());
        }
        if let Some(cb) = opts.progress.as_mut() {
            if k % report_every == 0 || k == runcfg.iterations {
                cb(ProgressEvent {
                    iteration: k,
                    iterations: runcfg.iterations,
                    non_empty_clusters: state.non_empty_clusters(),
                    zeta: state.zeta,
                });
            }
        }
    }

    let spec_hash = fingerprint(
        serde_json::to_string(&(spec, hyper))
            .map_err(|e| Error::Format(format!("spec hashing: {e}")))?
            .as_bytes(),
    );
    let meta = ChainMeta {
        seed: runcfg.seed,
        stream_id: opts.stream_id,
        spec_hash,
        iterations: runcfg.iterations,
        burn_in: runcfg.burn_in,
        thin: runcfg.thin,
        dims: ChainDims {
            n: views.n,
            m: views.m,
            p_fe: views.fe.ncols(),
            p_re: views.re.ncols(),
            p_int: views.int.ncols(),
            q_cont: views.q_cont(),
            cat_cardinalities: views.u_cat.iter().map(|c| c.n_categories).collect(),
            c_max: spec.c_max,
        },
        rng_word_pos: rng.word_pos().to_string(),
        final_state: state,
    };
    let chain = ChainStore {
        meta,
        draws,
        trace_zeta,
        trace_nclus,
        trace_sigma2,
        trace_loglik,
    };
    chain.validate()?;
    Ok(chain)
}

/// Run `runcfg.n_chains` chains in parallel, one worker per chain, with
/// stream ids 0..n_chains.
pub fn run_chains(
    data: &LongitudinalDataset,
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    runcfg: &RunConfig,
) -> Result<Vec<ChainStore>> {
    runcfg.validate()?;
    (0..runcfg.n_chains as u64)
        .into_par_iter()
        .map(|stream| {
            run_chain_with_options(
                data,
                spec,
                hyper,
                runcfg,
                ChainOptions {
                    stream_id: stream,
                    ..ChainOptions::default()
                },
            )
        })
        .collect()
}
