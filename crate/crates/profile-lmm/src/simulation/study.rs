//! Replication study: repeated scenario fits with benchmark baselines and
//! boxplot-ready metric summaries.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_chain_with_options, ChainOptions, RunConfig};
use crate::error::{Error, Result};
use crate::model::chain::ChainStore;
use crate::model::design::build_design_views;
use crate::model::spec::Hyperparameters;
use crate::postprocess::{build_similarity, representative_clustering};
use crate::simulation::metrics::{adjusted_rand_index, purity, relative_rmse};
use crate::simulation::scenario::{
    benchmark_true_assignment, benchmark_true_centroids, generate_scenario, ScenarioConfig,
};

pub const METHOD_PROFILE_LMM: &str = "profile_lmm";
pub const METHOD_TRUE_CENTROIDS: &str = "true_centroids";
pub const METHOD_TRUE_ASSIGNMENT: &str = "true_assignment";

/// Fixed-effect coordinates that interact with the latent clusters
/// (intercept and x1) versus those that do not (x2, x3, x4).
pub const BETA_INTERACTING: [usize; 2] = [0, 1];
pub const BETA_NON_INTERACTING: [usize; 3] = [2, 3, 4];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: ScenarioConfig,
    pub n_reps: usize,
    pub c_max: usize,
    pub run: RunConfig,
    /// Similarity subset size; 0 uses every observation.
    pub subset_size: usize,
    pub k_max: usize,
    pub master_seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            n_reps: 25,
            c_max: 30,
            run: RunConfig {
                iterations: 3000,
                burn_in: 1000,
                thin: 1,
                seed: 1,
                n_chains: 1,
                record_loglik: false,
            },
            subset_size: 0,
            k_max: 15,
            master_seed: 31_415,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub rep: usize,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricSummary {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub summaries: Vec<MetricSummary>,
}

fn derive_seed(master: u64, rep: usize, salt: u64) -> u64 {
    master
        .wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(salt.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn evenly_spaced_subset(n: usize, size: usize) -> Vec<usize> {
    if size == 0 || size >= n {
        return (0..n).collect();
    }
    (0..size).map(|k| k * n / size).collect()
}

/// Posterior means of the original-scale fixed effects and the
/// random-effect covariance.
fn posterior_means(
    chain: &ChainStore,
    to_original: &nalgebra::DMatrix<f64>,
) -> (DVector<f64>, nalgebra::DMatrix<f64>) {
    let h = chain.kept() as f64;
    let p_fe = chain.meta.dims.p_fe;
    let p_re = chain.meta.dims.p_re;
    let mut beta = DVector::zeros(p_fe);
    let mut wre = nalgebra::DMatrix::zeros(p_re, p_re);
    for draw in &chain.draws {
        beta += to_original * &draw.beta;
        wre += draw.w_re.matrix();
    }
    (beta / h, wre / h)
}

fn coefficient_rmse(estimate: &DVector<f64>, truth: &DVector<f64>, coords: &[usize]) -> Result<f64> {
    let est: Vec<f64> = coords.iter().map(|&k| estimate[k]).collect();
    let tru: Vec<f64> = coords.iter().map(|&k| truth[k]).collect();
    relative_rmse(&est, &tru)
}

struct FitMetrics {
    beta_interacting: f64,
    beta_non_interacting: f64,
    wre: f64,
}

fn fit_metrics(
    chain: &ChainStore,
    to_original: &nalgebra::DMatrix<f64>,
    truth_beta: &DVector<f64>,
    truth_wre: &nalgebra::DMatrix<f64>,
) -> Result<FitMetrics> {
    let (beta_hat, wre_hat) = posterior_means(chain, to_original);
    Ok(FitMetrics {
        beta_interacting: coefficient_rmse(&beta_hat, truth_beta, &BETA_INTERACTING)?,
        beta_non_interacting: coefficient_rmse(&beta_hat, truth_beta, &BETA_NON_INTERACTING)?,
        wre: relative_rmse(wre_hat.as_slice(), truth_wre.as_slice())?,
    })
}

fn distinct(labels: &[usize]) -> usize {
    let mut seen = std::collections::BTreeSet::new();
    for &l in labels {
        seen.insert(l);
    }
    seen.len()
}

fn push_method_rows(
    rows: &mut Vec<StudyRow>,
    rep: usize,
    method: &str,
    ari: f64,
    pur: f64,
    n_clusters: usize,
    fit: &FitMetrics,
) {
    let mut push = |metric: &str, value: f64| {
        rows.push(StudyRow {
            rep,
            method: method.to_string(),
            metric: metric.to_string(),
            value,
        })
    };
    push("ari", ari);
    push("purity", pur);
    push("n_clusters", n_clusters as f64);
    push("relrmse_beta_interacting", fit.beta_interacting);
    push("relrmse_beta_non_interacting", fit.beta_non_interacting);
    push("relrmse_wre", fit.wre);
}

/// One repetition: generate, fit the profile model, post-process, run both
/// frozen-allocation baselines, and emit metric rows.
fn run_one_rep(cfg: &StudyConfig, rep: usize) -> Result<Vec<StudyRow>> {
    let mut scenario = cfg.scenario.clone();
    scenario.seed = derive_seed(cfg.master_seed, rep, 1);
    let (data, truth) = generate_scenario(&scenario)?;
    let spec = scenario.fit_model_spec(cfg.c_max, true);
    let views = build_design_views(&data, &spec)?;
    let hyper = Hyperparameters::default_for(views.re.ncols(), views.int.ncols(), views.q_cont());
    let mut runcfg = cfg.run.clone();
    runcfg.seed = derive_seed(cfg.master_seed, rep, 2);

    let chain = run_chain_with_options(&data, &spec, &hyper, &runcfg, ChainOptions::default())
        .map_err(|e| Error::Numerical(format!("repetition {rep}: {e}")))?;

    let subset = evenly_spaced_subset(data.n(), cfg.subset_size);
    let sim = build_similarity(&chain, &subset)?;
    let rep_clust = representative_clustering(&sim, None, cfg.k_max)?;
    let subset_truth: Vec<usize> = subset.iter().map(|&i| truth.labels[i]).collect();

    let to_original = views.fe.to_original_matrix();
    let mut rows = Vec::new();

    let profile_fit = fit_metrics(&chain, &to_original, &truth.beta, &truth.re_cov)?;
    push_method_rows(
        &mut rows,
        rep,
        METHOD_PROFILE_LMM,
        adjusted_rand_index(&rep_clust.labels, &subset_truth)?,
        purity(&rep_clust.labels, &subset_truth)?,
        rep_clust.k,
        &profile_fit,
    );

    let benchmarks = [
        (
            METHOD_TRUE_CENTROIDS,
            benchmark_true_centroids(&data, &truth)?,
        ),
        (METHOD_TRUE_ASSIGNMENT, benchmark_true_assignment(&truth)),
    ];
    for (method, labels) in benchmarks {
        if cfg.c_max <= labels.iter().copied().max().unwrap_or(0) {
            return Err(Error::Spec(format!(
                "c_max {} too small for benchmark labels",
                cfg.c_max
            )));
        }
        let mut bench_cfg = runcfg.clone();
        bench_cfg.seed = derive_seed(cfg.master_seed, rep, 3);
        let bench_chain = run_chain_with_options(
            &data,
            &spec,
            &hyper,
            &bench_cfg,
            ChainOptions {
                frozen_z: Some(&labels),
                ..ChainOptions::default()
            },
        )
        .map_err(|e| Error::Numerical(format!("repetition {rep} ({method}): {e}")))?;
        let bench_fit = fit_metrics(&bench_chain, &to_original, &truth.beta, &truth.re_cov)?;
        let bench_subset: Vec<usize> = subset.iter().map(|&i| labels[i]).collect();
        push_method_rows(
            &mut rows,
            rep,
            method,
            adjusted_rand_index(&bench_subset, &subset_truth)?,
            purity(&bench_subset, &subset_truth)?,
            distinct(&labels),
            &bench_fit,
        );
    }
    Ok(rows)
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(rows: &[StudyRow]) -> Vec<MetricSummary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for row in rows {
        let key = (row.method.clone(), row.metric.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, metric)| {
            let mut values: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method && r.metric == metric)
                .map(|r| r.value)
                .collect();
            values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            MetricSummary {
                method,
                metric,
                mean,
                min: values[0],
                q25: quantile(&values, 0.25),
                median: quantile(&values, 0.5),
                q75: quantile(&values, 0.75),
                max: *values.last().expect("nonempty"),
            }
        })
        .collect()
}

/// Run all repetitions (in parallel, seeds derived from the master seed)
/// and summarize every (method, metric) distribution.
pub fn run_replication_study(cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.n_reps == 0 {
        return Err(Error::Parameter("study needs at least one repetition".into()));
    }
    cfg.run.validate()?;
    let per_rep: Vec<Vec<StudyRow>> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|rep| run_one_rep(cfg, rep))
        .collect::<Result<_>>()?;
    let rows: Vec<StudyRow> = per_rep.into_iter().flatten().collect();
    let summaries = summarize(&rows);
    Ok(StudyReport { rows, summaries })
}

impl StudyReport {
    pub fn values(&self, method: &str, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn summary(&self, method: &str, metric: &str) -> Option<&MetricSummary> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.metric == metric)
    }
}
