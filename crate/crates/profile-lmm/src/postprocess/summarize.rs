//! Representative clustering and pooled cluster-parameter summaries.
//!
//! The pooled sample set for representative cluster c and parameter kind P
//! is {P^(h)_{Z^(h)_i} : all kept draws h, all subset observations i with
//! Z*_i = c}, held as weighted samples (per draw, the count of subset
//! members of c landing in each sampled cluster). Means and equal-tailed
//! quantile intervals come from that weighted pool, so any per-draw label
//! permutation leaves every summary unchanged.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::chain::ChainStore;
use crate::model::state::ParameterState;
use crate::postprocess::pam::{pam, select_k};
use crate::postprocess::similarity::{dissimilarity, SimilarityMatrix};

/// Consensus partition of the similarity subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeClustering {
    pub subset_ids: Vec<usize>,
    /// Label per subset observation, in 0..k.
    pub labels: Vec<usize>,
    pub k: usize,
    /// Medoid observation ids (into the original dataset).
    pub medoid_ids: Vec<usize>,
    pub sizes: Vec<usize>,
}

/// PAM on D = 1 - S; `k` fixed, or chosen by average silhouette width up to
/// `k_max` when absent.
pub fn representative_clustering(
    sim: &SimilarityMatrix,
    k: Option<usize>,
    k_max: usize,
) -> Result<RepresentativeClustering> {
    let d = dissimilarity(sim);
    let k = match k {
        Some(k) => k,
        None => select_k(&d, k_max)?,
    };
    let result = pam(&d, k)?;
    let mut sizes = vec![0usize; k];
    for &l in &result.labels {
        sizes[l] += 1;
    }
    Ok(RepresentativeClustering {
        subset_ids: sim.subset_ids.clone(),
        labels: result.labels,
        k,
        medoid_ids: result.medoids.iter().map(|&m| sim.subset_ids[m]).collect(),
        sizes,
    })
}

/// Which cluster-specific parameter to pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    /// Cluster interaction effects.
    Gamma,
    /// Gaussian locations of the clustering covariates.
    Mu,
    /// Gaussian covariances (flattened row-major).
    Sigma,
    /// Category probabilities (all categorical covariates concatenated).
    Phi,
}

/// Affine map applied to each pooled sample before summarizing (used to
/// report on the original covariate scale).
#[derive(Clone, Debug)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            offset: DVector::zeros(dim),
        }
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v + &self.offset
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    pub mean: f64,
    /// Equal-tailed interval; absent at level 0.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterParamSummary {
    pub cluster: usize,
    pub n_obs: usize,
    /// False marks the missing-summary marker for empty clusters.
    pub present: bool,
    pub coords: Vec<CoordinateSummary>,
}

/// Pooled summaries for every representative cluster, plus the per-draw
/// cluster means needed for posterior contrasts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub kind: ParamKind,
    pub level: f64,
    pub clusters: Vec<ClusterParamSummary>,
    /// Per cluster: kept-draws x dim matrix of within-draw pooled means.
    pub draw_means: Vec<DMatrix<f64>>,
}

fn param_dim(state: &ParameterState, kind: ParamKind) -> usize {
    match kind {
        ParamKind::Gamma => state.gamma.first().map_or(0, |g| g.len()),
        ParamKind::Mu => state.theta_u.first().map_or(0, |t| t.mean.len()),
        ParamKind::Sigma => {
            let q = state.theta_u.first().map_or(0, |t| t.mean.len());
            q * q
        }
        ParamKind::Phi => state
            .theta_u
            .first()
            .map_or(0, |t| t.cat_probs.iter().map(|p| p.len()).sum()),
    }
}

fn param_value(state: &ParameterState, cluster: usize, kind: ParamKind) -> DVector<f64> {
    match kind {
        ParamKind::Gamma => state.gamma[cluster].clone(),
        ParamKind::Mu => state.theta_u[cluster].mean.clone(),
        ParamKind::Sigma => {
            let m = state.theta_u[cluster].cov.matrix();
            let q = m.nrows();
            DVector::from_fn(q * q, |idx, _| m[(idx / q, idx % q)])
        }
        ParamKind::Phi => {
            let probs = &state.theta_u[cluster].cat_probs;
            let total: usize = probs.iter().map(|p| p.len()).sum();
            let mut out = DVector::zeros(total);
            let mut offset = 0;
            for p in probs {
                for j in 0..p.len() {
                    out[offset + j] = p[j];
                }
                offset += p.len();
            }
            out
        }
    }
}

/// Weighted type-1 quantile: smallest value whose cumulative weight reaches
/// `p` of the total.
fn weighted_quantile(samples: &mut [(f64, f64)], p: f64) -> f64 {
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite samples"));
    let total: f64 = samples.iter().map(|s| s.1).sum();
    let target = p * total;
    let mut acc = 0.0;
    for &(v, w) in samples.iter() {
        acc += w;
        if acc >= target {
            return v;
        }
    }
    samples.last().expect("nonempty samples").0
}

/// Pool a cluster-specific parameter over draws and subset observations and
/// summarize with means and equal-tailed credible intervals.
///
/// `level` 0 yields point means only (no intervals). An empty representative
/// cluster is reported with `present = false` rather than aborting.
pub fn aggregate_cluster_params(
    chain: &ChainStore,
    rep: &RepresentativeClustering,
    kind: ParamKind,
    level: f64,
    transform: Option<&AffineMap>,
) -> Result<ClusterSummary> {
    if chain.kept() == 0 {
        return Err(Error::Spec("aggregation needs kept draws".into()));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::Parameter(format!(
            "credible level {level} must lie in [0, 1)"
        )));
    }
    let n = chain.meta.dims.n;
    if let Some(&bad) = rep.subset_ids.iter().find(|&&id| id >= n) {
        return Err(Error::Parameter(format!(
            "subset id {bad} out of range for {n} observations"
        )));
    }
    let h = chain.kept();
    let c_max = chain.meta.dims.c_max;
    let dim = param_dim(&chain.draws[0], kind);
    if dim == 0 {
        return Err(Error::Spec(
            "the requested parameter kind has no coordinates in this model".into(),
        ));
    }
    if let Some(t) = transform {
        if t.matrix.nrows() != dim || t.matrix.ncols() != dim || t.offset.len() != dim {
            return Err(Error::Parameter(format!(
                "transform has shape {}x{}, expected {dim}x{dim}",
                t.matrix.nrows(),
                t.matrix.ncols()
            )));
        }
    }

    // Per draw and representative cluster: counts over sampled labels.
    // weights[c][t] lists (sampled label, count).
    let mut weights: Vec<Vec<Vec<(usize, f64)>>> = vec![Vec::with_capacity(h); rep.k];
    let mut scratch = vec![0.0f64; c_max];
    for draw in &chain.draws {
        let mut per_cluster: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rep.k];
        for c in 0..rep.k {
            scratch.fill(0.0);
            for (pos, &id) in rep.subset_ids.iter().enumerate() {
                if rep.labels[pos] == c {
                    scratch[draw.z[id]] += 1.0;
                }
            }
            per_cluster[c] = scratch
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(k, &w)| (k, w))
                .collect();
        }
        for (c, w) in per_cluster.into_iter().enumerate() {
            weights[c].push(w);
        }
    }

    // Transformed parameter values per draw and sampled label, computed once.
    let values: Vec<Vec<DVector<f64>>> = chain
        .draws
        .iter()
        .map(|draw| {
            (0..c_max)
                .map(|k| {
                    let v = param_value(draw, k, kind);
                    match transform {
                        Some(t) => t.apply(&v),
                        None => v,
                    }
                })
                .collect()
        })
        .collect();

    let mut clusters = Vec::with_capacity(rep.k);
    let mut draw_means = Vec::with_capacity(rep.k);
    for c in 0..rep.k {
        let n_obs = rep.sizes[c];
        let mut means_matrix = DMatrix::zeros(h, dim);
        if n_obs == 0 {
            clusters.push(ClusterParamSummary {
                cluster: c,
                n_obs,
                present: false,
                coords: Vec::new(),
            });
            draw_means.push(means_matrix);
            continue;
        }
        for t in 0..h {
            for &(k, w) in &weights[c][t] {
                for j in 0..dim {
                    means_matrix[(t, j)] += w * values[t][k][j];
                }
            }
            for j in 0..dim {
                means_matrix[(t, j)] /= n_obs as f64;
            }
        }
        let mut coords = Vec::with_capacity(dim);
        for j in 0..dim {
            // The pooled mean equals the mean of within-draw means because
            // every draw pools exactly n_obs samples.
            let mean = means_matrix.column(j).sum() / h as f64;
            let (lower, upper) = if level > 0.0 {
                let mut pool: Vec<(f64, f64)> = Vec::new();
                for t in 0..h {
                    for &(k, w) in &weights[c][t] {
                        pool.push((values[t][k][j], w));
                    }
                }
                let lo = weighted_quantile(&mut pool, 0.5 - level / 2.0);
                let hi = weighted_quantile(&mut pool, 0.5 + level / 2.0);
                (Some(lo), Some(hi))
            } else {
                (None, None)
            };
            coords.push(CoordinateSummary { mean, lower, upper });
        }
        clusters.push(ClusterParamSummary {
            cluster: c,
            n_obs,
            present: true,
            coords,
        });
        draw_means.push(means_matrix);
    }
    Ok(ClusterSummary {
        kind,
        level,
        clusters,
        draw_means,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub cluster: usize,
    pub coords: Vec<CoordinateSummary>,
}

/// Pooled-sample differences against a reference cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastTable {
    pub reference: usize,
    pub level: f64,
    pub rows: Vec<ContrastRow>,
}

/// Per-draw differences of within-draw cluster means against the reference,
/// summarized with equal-tailed intervals at `level`.
pub fn cluster_effect_contrasts(
    summary: &ClusterSummary,
    reference: usize,
    level: f64,
) -> Result<ContrastTable> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::Parameter(format!(
            "contrast level {level} must lie in [0, 1)"
        )));
    }
    let k = summary.clusters.len();
    if reference >= k || !summary.clusters[reference].present {
        return Err(Error::Parameter(format!(
            "reference cluster {reference} is missing or empty"
        )));
    }
    let ref_means = &summary.draw_means[reference];
    let h = ref_means.nrows();
    let dim = ref_means.ncols();
    let mut rows = Vec::with_capacity(k);
    for c in 0..k {
        if !summary.clusters[c].present {
            rows.push(ContrastRow {
                cluster: c,
                coords: Vec::new(),
            });
            continue;
        }
        let mut coords = Vec::with_capacity(dim);
        for j in 0..dim {
            let diffs: Vec<f64> = (0..h)
                .map(|t| summary.draw_means[c][(t, j)] - ref_means[(t, j)])
                .collect();
            let mean = diffs.iter().sum::<f64>() / h as f64;
            let (lower, upper) = if level > 0.0 {
                let mut pool: Vec<(f64, f64)> = diffs.iter().map(|&d| (d, 1.0)).collect();
                let lo = weighted_quantile(&mut pool, 0.5 - level / 2.0);
                let hi = weighted_quantile(&mut pool, 0.5 + level / 2.0);
                (Some(lo), Some(hi))
            } else {
                (None, None)
            };
            coords.push(CoordinateSummary { mean, lower, upper });
        }
        rows.push(ContrastRow {
            cluster: c,
            coords,
        });
    }
    Ok(ContrastTable {
        reference,
        level,
        rows,
    })
}
