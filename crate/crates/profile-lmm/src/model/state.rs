//! Full sampler state and its initialization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditionals::{cluster_sufficient_stats, update_assignment_params};
use crate::error::{Error, Result};
use crate::model::data::LongitudinalDataset;
use crate::model::design::{build_design_views, DesignViews};
use crate::model::spec::{Hyperparameters, ModelSpec};
use crate::stochastics::{PsdMatrix, RngStream};

/// Assignment-distribution parameters of one cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignParams {
    /// Gaussian location for the continuous clustering covariates.
    pub mean: DVector<f64>,
    /// Gaussian covariance for the continuous clustering covariates.
    pub cov: PsdMatrix,
    /// Category probabilities, one simplex per categorical covariate.
    pub cat_probs: Vec<DVector<f64>>,
}

/// One full draw of the sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    /// Cluster interaction effects, one vector per cluster (all C, including
    /// empty clusters refreshed from their prior).
    pub gamma: Vec<DVector<f64>>,
    pub w_int: PsdMatrix,
    /// Individual random effects, one vector per individual.
    pub eta: Vec<DVector<f64>>,
    pub w_re: PsdMatrix,
    pub theta_u: Vec<ClusterAssignParams>,
    /// Cluster allocation per observation, in `0..c_max`.
    pub z: Vec<usize>,
    /// Stick fractions; the last entry is pinned to 1.
    pub v: Vec<f64>,
    /// Mixture weights derived from `v`.
    pub pi: Vec<f64>,
    pub zeta: f64,
}

impl ParameterState {
    pub fn c_max(&self) -> usize {
        self.gamma.len()
    }

    /// Number of clusters with at least one allocated observation.
    pub fn non_empty_clusters(&self) -> usize {
        let mut seen = vec![false; self.c_max()];
        for &c in &self.z {
            seen[c] = true;
        }
        seen.iter().filter(|s| **s).count()
    }
}

/// Stick-breaking transform: pi_c = v_c * prod_{j<c} (1 - v_j).
pub fn stick_to_weights(v: &[f64]) -> Vec<f64> {
    let mut remaining = 1.0;
    let mut pi = Vec::with_capacity(v.len());
    for &vc in v {
        pi.push(vc * remaining);
        remaining *= 1.0 - vc;
    }
    pi
}

/// Uniform-weight stick initialization: v_c = 1/(C-c) for 0-based c, so the
/// derived weights are exactly 1/C with the final stick pinned to 1.
pub fn uniform_sticks(c_max: usize) -> Vec<f64> {
    (0..c_max).map(|c| 1.0 / (c_max - c) as f64).collect()
}

/// Lloyd k-means with k-means++ seeding, used only to initialize
/// allocations. Ties break toward the lowest index; deterministic given the
/// stream.
fn kmeans_labels(points: &DMatrix<f64>, k: usize, rng: &mut RngStream) -> Vec<usize> {
    use rand::RngCore;
    let n = points.nrows();
    let k = k.min(n).max(1);
    let mut centroids: Vec<DVector<f64>> = Vec::with_capacity(k);
    let first = (rng.next_u64() % n as u64) as usize;
    centroids.push(points.row(first).transpose());
    let mut dist2 = vec![0.0f64; n];
    while centroids.len() < k {
        for i in 0..n {
            let p = points.row(i).transpose();
            dist2[i] = centroids
                .iter()
                .map(|c| (&p - c).norm_squared())
                .fold(f64::INFINITY, f64::min);
        }
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let u = (rng.next_u64() as f64 / u64::MAX as f64) * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in dist2.iter().enumerate() {
                acc += d;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            (rng.next_u64() % n as u64) as usize
        };
        centroids.push(points.row(next).transpose());
    }
    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let p = points.row(i).transpose();
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = (&p - centroid).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![DVector::zeros(points.ncols()); centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for i in 0..n {
            sums[labels[i]] += points.row(i).transpose();
            counts[labels[i]] += 1;
        }
        for c in 0..centroids.len() {
            if counts[c] > 0 {
                centroids[c] = &sums[c] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Inverse-Wishart prior mean `scale / (dof - dim - 1)` when defined,
/// otherwise the scale itself.
fn iw_prior_mean(scale: &PsdMatrix, dof: f64) -> PsdMatrix {
    let p = scale.dim() as f64;
    if dof > p + 1.0 {
        PsdMatrix::new(scale.matrix() / (dof - p - 1.0), "iw_prior_mean")
            .expect("scaled PD matrix stays PD")
    } else {
        scale.clone()
    }
}

/// Initial sampler state: k-means allocations with k = min(C, 10), zeroed
/// coefficients, the outcome sample variance for sigma2, prior means for the
/// covariance blocks, one assignment-parameter sweep, uniform mixture
/// weights, and the prior-mean concentration.
pub fn init_state(
    data: &LongitudinalDataset,
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    rng: &mut RngStream,
) -> Result<ParameterState> {
    let views = build_design_views(data, spec)?;
    init_state_with_views(data.y(), &views, spec, hyper, rng)
}

pub fn init_state_with_views(
    y: &DVector<f64>,
    views: &DesignViews,
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    rng: &mut RngStream,
) -> Result<ParameterState> {
    let n = views.n;
    if y.len() != n {
        return Err(Error::Data(format!(
            "outcome has {} entries, design has {n}",
            y.len()
        )));
    }
    let c_max = spec.c_max;
    hyper.validate(views.re.ncols(), views.int.ncols(), views.q_cont())?;

    // Cluster on the continuous covariates; fall back to one-hot encoded
    // categorical codes when there are none.
    let points = if views.q_cont() > 0 {
        views.u_cont.clone()
    } else if !views.u_cat.is_empty() {
        let total: usize = views.u_cat.iter().map(|c| c.n_categories).sum();
        let mut onehot = DMatrix::zeros(n, total);
        let mut offset = 0;
        for col in &views.u_cat {
            for (i, &code) in col.codes.iter().enumerate() {
                onehot[(i, offset + code)] = 1.0;
            }
            offset += col.n_categories;
        }
        onehot
    } else {
        return Err(Error::Spec(
            "model needs at least one clustering covariate".into(),
        ));
    };
    let z = kmeans_labels(&points, c_max.min(10), rng);

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let sigma2 = if n > 1 {
        y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    if !(sigma2 > 0.0) {
        return Err(Error::Data(
            "outcome has zero sample variance; cannot initialize the error variance".into(),
        ));
    }

    let stats = cluster_sufficient_stats(views, &z, c_max);
    let theta_u = update_assignment_params(&stats, hyper, rng)?;

    let v = uniform_sticks(c_max);
    let pi = stick_to_weights(&v);
    Ok(ParameterState {
        beta: DVector::zeros(views.fe.ncols()),
        sigma2,
        gamma: vec![DVector::zeros(views.int.ncols()); c_max],
        w_int: iw_prior_mean(&hyper.int_cov_scale, hyper.int_cov_dof),
        eta: vec![DVector::zeros(views.re.ncols()); views.m],
        w_re: iw_prior_mean(&hyper.re_cov_scale, hyper.re_cov_dof),
        theta_u,
        z,
        v,
        pi,
        zeta: hyper.dp_shape * hyper.dp_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stick_transform_geometric_example() {
        let v = vec![0.5, 0.5, 0.5, 1.0];
        let pi = stick_to_weights(&v);
        assert_eq!(pi, vec![0.5, 0.25, 0.125, 0.125]);
    }

    #[test]
    fn uniform_sticks_give_uniform_weights() {
        for c in [2usize, 5, 60] {
            let v = uniform_sticks(c);
            assert_eq!(*v.last().unwrap(), 1.0);
            let pi = stick_to_weights(&v);
            let sum: f64 = pi.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for p in &pi {
                assert!((p - 1.0 / c as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_state_matches_contract() {
        let data = crate::model::testutil::small_dataset(24, 3, 42);
        let spec = crate::model::testutil::small_spec(4);
        let hyper = Hyperparameters::default_for(1, 1, 2);
        let mut rng = RngStream::new(9, 0);
        let state = init_state(&data, &spec, &hyper, &mut rng).unwrap();

        // Uniform initial weights.
        for p in &state.pi {
            assert!((p - 1.0 / spec.c_max as f64).abs() < 1e-12);
        }
        // At most min(C, 10) distinct labels.
        let distinct = state.non_empty_clusters();
        assert!(distinct <= spec.c_max.min(10));
        // sigma2 equals the sample variance of y.
        let y = data.y();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((state.sigma2 - var).abs() < 1e-12);
        // Covariances start at their prior means.
        let expect = hyper.re_cov_scale.matrix() / (hyper.re_cov_dof - 1.0 - 1.0);
        assert!((state.w_re.matrix()[(0, 0)] - expect[(0, 0)]).abs() < 1e-12);
        // Coefficients start at zero.
        assert!(state.beta.iter().all(|&b| b == 0.0));
        assert!(state.gamma.iter().all(|g| g.iter().all(|&v| v == 0.0)));
    }
}
