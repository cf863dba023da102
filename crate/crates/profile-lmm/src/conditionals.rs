//! Conditional-posterior updates of the blocked Gibbs sampler.
//!
//! Each update is a pure function of (state components, data views,
//! hyperparameters, rng) returning the refreshed component. The marginal
//! terms that involve the n_c x n_c covariance `sigma2 I + A W A^T` are
//! evaluated through the equivalent precision form `K = sigma2 W^-1 + A^T A`
//! (a Woodbury rewrite), so per-cluster and per-individual work scales with
//! the latent dimension instead of the block size.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::design::DesignViews;
use crate::model::spec::Hyperparameters;
use crate::model::state::{stick_to_weights, ClusterAssignParams, ParameterState};
use crate::stochastics::{
    cholesky, sample_beta, sample_categorical, sample_dirichlet, sample_gamma,
    sample_inverse_wishart, sample_mvn_from_precision_chol, sample_std_normal_vec, PsdMatrix,
    RngStream,
};

const LN_2PI: f64 = 1.8378770664093453;

/// Per-cluster sufficient statistics of the clustering covariates.
#[derive(Clone, Debug)]
pub struct ClusterSufficientStats {
    /// Observation count per cluster.
    pub counts: Vec<usize>,
    /// Sample mean of the continuous covariates per cluster (zero when empty).
    pub means: Vec<DVector<f64>>,
    /// Centered scatter per cluster.
    pub scatters: Vec<DMatrix<f64>>,
    /// Category counts: `[cluster][categorical covariate][category]`.
    pub cat_counts: Vec<Vec<Vec<f64>>>,
}

pub fn cluster_sufficient_stats(
    views: &DesignViews,
    z: &[usize],
    c_max: usize,
) -> ClusterSufficientStats {
    let q = views.q_cont();
    let mut counts = vec![0usize; c_max];
    let mut sums = vec![DVector::<f64>::zeros(q); c_max];
    for (i, &c) in z.iter().enumerate() {
        counts[c] += 1;
        for j in 0..q {
            sums[c][j] += views.u_cont[(i, j)];
        }
    }
    let means: Vec<DVector<f64>> = (0..c_max)
        .map(|c| {
            if counts[c] > 0 {
                &sums[c] / counts[c] as f64
            } else {
                DVector::zeros(q)
            }
        })
        .collect();
    let mut scatters = vec![DMatrix::<f64>::zeros(q, q); c_max];
    let mut centered = DVector::<f64>::zeros(q);
    for (i, &c) in z.iter().enumerate() {
        for j in 0..q {
            centered[j] = views.u_cont[(i, j)] - means[c][j];
        }
        for a in 0..q {
            for b in a..q {
                let v = centered[a] * centered[b];
                scatters[c][(a, b)] += v;
                if a != b {
                    scatters[c][(b, a)] += v;
                }
            }
        }
    }
    let empty: Vec<Vec<f64>> = views
        .u_cat
        .iter()
        .map(|col| vec![0.0; col.n_categories])
        .collect();
    let mut cat_counts = vec![empty; c_max];
    for (j, col) in views.u_cat.iter().enumerate() {
        for (i, &code) in col.codes.iter().enumerate() {
            cat_counts[z[i]][j][code] += 1.0;
        }
    }
    ClusterSufficientStats {
        counts,
        means,
        scatters,
        cat_counts,
    }
}

/// Normal-inverse-Wishart posterior parameters for one cluster under the
/// zero-mean prior: location `n_c ubar / (lambda0 + n_c)`, shrinkage
/// `lambda0 + n_c`, dof `nu0 + n_c`, and scale
/// `Phi0 + S_c + lambda0 n_c / (lambda0 + n_c) ubar ubar^T`.
/// An empty cluster reduces exactly to the prior.
pub fn niw_posterior(
    count: usize,
    mean: &DVector<f64>,
    scatter: &DMatrix<f64>,
    hyper: &Hyperparameters,
) -> (DVector<f64>, f64, f64, DMatrix<f64>) {
    let n_c = count as f64;
    let lambda_n = hyper.assign_shrinkage + n_c;
    let nu_n = hyper.assign_dof + n_c;
    let loc = mean * (n_c / lambda_n);
    let mut scale = hyper.assign_scale.matrix() + scatter;
    if count > 0 {
        scale += mean * mean.transpose() * (hyper.assign_shrinkage * n_c / lambda_n);
    }
    (loc, lambda_n, nu_n, scale)
}

/// Block a: refresh the assignment-distribution parameters of every cluster
/// from their conjugate posteriors (the prior, for empty clusters).
pub fn update_assignment_params(
    stats: &ClusterSufficientStats,
    hyper: &Hyperparameters,
    rng: &mut RngStream,
) -> Result<Vec<ClusterAssignParams>> {
    let c_max = stats.counts.len();
    let q = stats.means.first().map_or(0, |m| m.len());
    let mut params = Vec::with_capacity(c_max);
    for c in 0..c_max {
        let site = format!("update_assignment_params cluster {c}");
        let (mean, cov) = if q > 0 {
            let (loc, lambda_n, nu_n, scale) =
                niw_posterior(stats.counts[c], &stats.means[c], &stats.scatters[c], hyper);
            let scale = PsdMatrix::new(scale, &site)?;
            let cov = sample_inverse_wishart(&scale, nu_n, &site, rng)?;
            let mean_cov = cov.matrix() / lambda_n;
            let chol = cholesky(&mean_cov, &site)?;
            let mean = &loc + chol.l() * sample_std_normal_vec(q, rng);
            (mean, cov)
        } else {
            (DVector::zeros(0), PsdMatrix::empty())
        };
        let mut cat_probs = Vec::with_capacity(stats.cat_counts[c].len());
        for counts in &stats.cat_counts[c] {
            let alpha: Vec<f64> = counts
                .iter()
                .map(|&k| hyper.cat_concentration + k)
                .collect();
            cat_probs.push(DVector::from_vec(sample_dirichlet(&alpha, rng)?));
        }
        params.push(ClusterAssignParams {
            mean,
            cov,
            cat_probs,
        });
    }
    Ok(params)
}

/// The joint conditional of (beta, gamma_1..gamma_C) with gamma marginalized
/// out of the beta step.
///
/// beta ~ N(beta_mean, beta_cov); given beta, each cluster's effect is
/// gamma_c ~ N(base_mean + beta_map beta, cov). Empty clusters reduce to the
/// N(0, W_int) prior through the same formulas.
#[derive(Debug)]
pub struct BetaGammaConditional {
    pub beta_mean: DVector<f64>,
    pub beta_cov: DMatrix<f64>,
    beta_prec_chol: Cholesky<f64, Dyn>,
    pub clusters: Vec<GammaConditional>,
}

#[derive(Debug)]
pub struct GammaConditional {
    /// Conditional mean at beta = 0.
    pub base_mean: DVector<f64>,
    /// Sensitivity of the conditional mean to beta.
    pub beta_map: DMatrix<f64>,
    /// Conditional covariance given beta.
    pub cov: DMatrix<f64>,
    prec_chol: Cholesky<f64, Dyn>,
}

impl BetaGammaConditional {
    pub fn sample(&self, rng: &mut RngStream) -> (DVector<f64>, Vec<DVector<f64>>) {
        let beta = sample_mvn_from_precision_chol(&self.beta_mean, &self.beta_prec_chol, rng);
        let gammas = self
            .clusters
            .iter()
            .map(|g| {
                let mean = &g.base_mean + &g.beta_map * &beta;
                sample_mvn_from_precision_chol(&mean, &g.prec_chol, rng)
            })
            .collect();
        (beta, gammas)
    }
}

/// Build the joint (beta, gamma) conditional given the current allocations,
/// random effects, error variance, and cluster-effect covariance.
pub fn beta_gamma_conditional(
    y: &DVector<f64>,
    views: &DesignViews,
    cluster_rows: &[Vec<usize>],
    eta: &[DVector<f64>],
    sigma2: f64,
    w_int: &PsdMatrix,
    hyper: &Hyperparameters,
) -> Result<BetaGammaConditional> {
    let p_fe = views.fe.ncols();
    let w_inv = w_int.cholesky("update_beta_gamma_joint W_int")?.inverse();

    // Outcome minus the random-effect contribution.
    let mut resid = y.clone();
    for (j, rows) in views.rows_of_individual.iter().enumerate() {
        for &i in rows {
            resid[i] -= views.re.matrix.row(i).transpose().dot(&eta[j]);
        }
    }

    struct ClusterPieces {
        k_chol: Cholesky<f64, Dyn>,
        at_r: DVector<f64>,
        at_f: DMatrix<f64>,
    }
    let mut beta_prec = DMatrix::<f64>::identity(p_fe, p_fe) * (hyper.ridge_precision / sigma2);
    let mut beta_rhs = DVector::<f64>::zeros(p_fe);
    let mut pieces = Vec::with_capacity(cluster_rows.len());
    for (c, rows) in cluster_rows.iter().enumerate() {
        let site = format!("update_beta_gamma_joint cluster {c}");
        let a = views.int.matrix.select_rows(rows.iter());
        let f = views.fe.matrix.select_rows(rows.iter());
        let r_c = DVector::from_iterator(rows.len(), rows.iter().map(|&i| resid[i]));
        let k = &w_inv * sigma2 + a.transpose() * &a;
        let k = (&k + k.transpose()) * 0.5;
        let k_chol = cholesky(&k, &site)?;
        let at_r = a.transpose() * &r_c;
        let at_f = a.transpose() * &f;
        let k_inv_at_f = k_chol.solve(&at_f);
        let k_inv_at_r = k_chol.solve(&at_r);
        beta_prec += (f.transpose() * &f - at_f.transpose() * &k_inv_at_f) / sigma2;
        beta_rhs += (f.transpose() * &r_c - at_f.transpose() * &k_inv_at_r) / sigma2;
        pieces.push(ClusterPieces { k_chol, at_r, at_f });
    }
    // Symmetrize against accumulated rounding before factorizing.
    let beta_prec = (&beta_prec + beta_prec.transpose()) * 0.5;
    let beta_prec_chol = cholesky(&beta_prec, "update_beta_gamma_joint beta precision")?;
    let beta_cov = beta_prec_chol.inverse();
    let beta_mean = beta_prec_chol.solve(&beta_rhs);

    let clusters = pieces
        .into_iter()
        .enumerate()
        .map(|(c, p)| {
            let base_mean = p.k_chol.solve(&p.at_r);
            let beta_map = -p.k_chol.solve(&p.at_f);
            let cov = p.k_chol.inverse() * sigma2;
            // The gamma precision is K / sigma2; rescale the existing factor.
            let l = p.k_chol.l().clone_owned() / sigma2.sqrt();
            let prec = &l * l.transpose();
            let prec_chol = cholesky(&prec, &format!("update_beta_gamma_joint gamma {c}"))?;
            Ok(GammaConditional {
                base_mean,
                beta_map,
                cov,
                prec_chol,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BetaGammaConditional {
        beta_mean,
        beta_cov,
        beta_prec_chol,
        clusters,
    })
}

/// Block b, step 1: joint draw of the fixed effects and all cluster effects.
pub fn update_beta_gamma_joint(
    y: &DVector<f64>,
    views: &DesignViews,
    cluster_rows: &[Vec<usize>],
    eta: &[DVector<f64>],
    sigma2: f64,
    w_int: &PsdMatrix,
    hyper: &Hyperparameters,
    rng: &mut RngStream,
) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let cond = beta_gamma_conditional(y, views, cluster_rows, eta, sigma2, w_int, hyper)?;
    Ok(cond.sample(rng))
}

/// Per-observation linear predictor:
/// x_fe beta + x_re eta_g(i) + x_int gamma_z(i).
pub fn linear_predictor(
    views: &DesignViews,
    beta: &DVector<f64>,
    gamma: &[DVector<f64>],
    eta: &[DVector<f64>],
    z: &[usize],
) -> DVector<f64> {
    let mut mu = &views.fe.matrix * beta;
    for (j, rows) in views.rows_of_individual.iter().enumerate() {
        for &i in rows {
            mu[i] += views.re.matrix.row(i).transpose().dot(&eta[j]);
        }
    }
    for (i, &c) in z.iter().enumerate() {
        mu[i] += views.int.matrix.row(i).transpose().dot(&gamma[c]);
    }
    mu
}

/// Posterior (shape, rate) of the error precision.
///
/// Under the normal-gamma prior, beta | sigma2 ~ N(0, sigma2/ridge I), so
/// the precision conditional picks up the fixed-effect prior terms:
/// shape a + (n + p_fe)/2, rate b + SSR/2 + ridge |beta|^2 / 2.
pub fn sigma_posterior(
    n: usize,
    p_fe: usize,
    ssr: f64,
    beta: &DVector<f64>,
    hyper: &Hyperparameters,
) -> (f64, f64) {
    let shape = hyper.noise_shape + (n as f64 + p_fe as f64) / 2.0;
    let rate = hyper.noise_rate + 0.5 * ssr + 0.5 * hyper.ridge_precision * beta.norm_squared();
    (shape, rate)
}

/// Block b, step 2: error-variance update via its precision.
#[allow(clippy::too_many_arguments)]
pub fn update_sigma(
    y: &DVector<f64>,
    views: &DesignViews,
    beta: &DVector<f64>,
    gamma: &[DVector<f64>],
    eta: &[DVector<f64>],
    z: &[usize],
    hyper: &Hyperparameters,
    rng: &mut RngStream,
) -> Result<f64> {
    update_sigma_with_rate_scale(y, views, beta, gamma, eta, z, hyper, 1.0, rng)
}

/// Error-variance update with a fault-injection knob: the posterior rate is
/// multiplied by `rate_scale`. Anything other than 1.0 makes the block
/// deliberately wrong; the sampler-validation harness uses this as a
/// negative control.
#[allow(clippy::too_many_arguments)]
pub fn update_sigma_with_rate_scale(
    y: &DVector<f64>,
    views: &DesignViews,
    beta: &DVector<f64>,
    gamma: &[DVector<f64>],
    eta: &[DVector<f64>],
    z: &[usize],
    hyper: &Hyperparameters,
    rate_scale: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    let mu = linear_predictor(views, beta, gamma, eta, z);
    let ssr: f64 = (0..views.n).map(|i| (y[i] - mu[i]).powi(2)).sum();
    let (shape, rate) = sigma_posterior(views.n, views.fe.ncols(), ssr, beta, hyper);
    let tau = sample_gamma(shape, rate * rate_scale, rng)?;
    Ok(1.0 / tau)
}

/// The per-individual conditional of the random effects:
/// eta_j ~ N(mean, sigma2 K_j^-1) with K_j = sigma2 W_re^-1 + R_j^T R_j.
pub struct RandomEffectConditional {
    pub mean: DVector<f64>,
    k_chol: Cholesky<f64, Dyn>,
    sigma2: f64,
}

impl RandomEffectConditional {
    pub fn covariance(&self) -> DMatrix<f64> {
        self.k_chol.inverse() * self.sigma2
    }

    fn sample(&self, site: &str, rng: &mut RngStream) -> Result<DVector<f64>> {
        let l = self.k_chol.l().clone_owned() / self.sigma2.sqrt();
        let prec_chol = cholesky(&(&l * l.transpose()), site)?;
        Ok(sample_mvn_from_precision_chol(&self.mean, &prec_chol, rng))
    }
}

/// Build every individual's conditional given the current fixed and cluster
/// effects.
pub fn random_effect_conditionals(
    y: &DVector<f64>,
    views: &DesignViews,
    beta: &DVector<f64>,
    gamma: &[DVector<f64>],
    z: &[usize],
    sigma2: f64,
    w_re: &PsdMatrix,
) -> Result<Vec<RandomEffectConditional>> {
    let w_inv = w_re.cholesky("update_random_effects W_re")?.inverse();
    // Outcome minus fixed and cluster contributions.
    let mut resid = y - &views.fe.matrix * beta;
    for (i, &c) in z.iter().enumerate() {
        resid[i] -= views.int.matrix.row(i).transpose().dot(&gamma[c]);
    }
    let mut conditionals = Vec::with_capacity(views.m);
    for (j, rows) in views.rows_of_individual.iter().enumerate() {
        let site = format!("update_random_effects individual {j}");
        let r = views.re.matrix.select_rows(rows.iter());
        let d = DVector::from_iterator(rows.len(), rows.iter().map(|&i| resid[i]));
        let k = &w_inv * sigma2 + r.transpose() * &r;
        let k = (&k + k.transpose()) * 0.5;
        let k_chol = cholesky(&k, &site)?;
        let mean = k_chol.solve(&(r.transpose() * d));
        conditionals.push(RandomEffectConditional {
            mean,
            k_chol,
            sigma2,
        });
    }
    Ok(conditionals)
}

/// Block b, step 3: per-individual random-effect draws.
#[allow(clippy::too_many_arguments)]
pub fn update_random_effects(
    y: &DVector<f64>,
    views: &DesignViews,
    beta: &DVector<f64>,
    gamma: &[DVector<f64>],
    z: &[usize],
    sigma2: f64,
    w_re: &PsdMatrix,
    rng: &mut RngStream,
) -> Result<Vec<DVector<f64>>> {
    let conditionals = random_effect_conditionals(y, views, beta, gamma, z, sigma2, w_re)?;
    conditionals
        .iter()
        .enumerate()
        .map(|(j, c)| c.sample(&format!("update_random_effects individual {j}"), rng))
        .collect()
}

/// Block b, step 4: random-effect covariance from the stacked scatter.
pub fn update_wre(
    eta: &[DVector<f64>],
    hyper: &Hyperparameters,
    rng: &mut RngStream,
) -> Result<PsdMatrix> {
    let mut scale = hyper.re_cov_scale.matrix().clone();
    for e in eta {
        scale += e * e.transpose();
    }
    let scale = PsdMatrix::new(scale, "update_wre scale")?;
    sample_inverse_wishart(
        &scale,
        hyper.re_cov_dof + eta.len() as f64,
        "update_wre",
        rng,
    )
}

/// Block b, step 5: cluster-effect covariance from all C effect vectors
/// (empty clusters contribute their prior refreshes).
pub fn update_wint(
    gamma: &[DVector<f64>],
    hyper: &Hyperparameters,
    rng: &mut RngStream,
) -> Result<PsdMatrix> {
    let mut scale = hyper.int_cov_scale.matrix().clone();
    for g in gamma {
        scale += g * g.transpose();
    }
    let scale = PsdMatrix::new(scale, "update_wint scale")?;
    sample_inverse_wishart(
        &scale,
        hyper.int_cov_dof + gamma.len() as f64,
        "update_wint",
        rng,
    )
}

/// Per-observation unnormalized allocation log-weights
/// `ln pi_c + ln f_y + ln f_u` over all clusters.
pub fn allocation_log_weights(
    y: &DVector<f64>,
    views: &DesignViews,
    state: &ParameterState,
) -> Result<Vec<Vec<f64>>> {
    let c_max = state.c_max();
    let q = views.q_cont();
    let sigma2 = state.sigma2;

    // Per-cluster Gaussian factors for the clustering covariates.
    struct UCluster {
        chol_l: DMatrix<f64>,
        log_norm: f64,
    }
    let mut u_clusters = Vec::with_capacity(c_max);
    for (c, theta) in state.theta_u.iter().enumerate() {
        if q > 0 {
            let chol = theta
                .cov
                .cholesky(&format!("update_allocations cluster {c}"))?;
            let logdet: f64 = (0..q).map(|i| chol.l()[(i, i)].ln()).sum::<f64>() * 2.0;
            u_clusters.push(UCluster {
                chol_l: chol.l().clone_owned(),
                log_norm: -0.5 * (q as f64 * LN_2PI + logdet),
            });
        } else {
            u_clusters.push(UCluster {
                chol_l: DMatrix::zeros(0, 0),
                log_norm: 0.0,
            });
        }
    }
    let log_pi: Vec<f64> = state
        .pi
        .iter()
        .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
        .collect();
    let log_phi: Vec<Vec<Vec<f64>>> = state
        .theta_u
        .iter()
        .map(|t| {
            t.cat_probs
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
                        .collect()
                })
                .collect()
        })
        .collect();

    // Fixed part of the outcome mean and the per-cluster interaction shifts.
    let mut fixed = &views.fe.matrix * &state.beta;
    for (j, rows) in views.rows_of_individual.iter().enumerate() {
        for &i in rows {
            fixed[i] += views.re.matrix.row(i).transpose().dot(&state.eta[j]);
        }
    }
    let gamma_mat = DMatrix::from_fn(views.int.ncols(), c_max, |r, c| state.gamma[c][r]);
    let int_shift = &views.int.matrix * gamma_mat;

    let ln_noise = -0.5 * (LN_2PI + sigma2.ln());
    let inv_2s2 = 0.5 / sigma2;
    let mut weights = Vec::with_capacity(views.n);
    let mut centered = DVector::<f64>::zeros(q);
    for i in 0..views.n {
        let mut logw = vec![0.0f64; c_max];
        for (c, lw_out) in logw.iter_mut().enumerate() {
            let mut lw = log_pi[c];
            if lw.is_finite() {
                let dy = y[i] - fixed[i] - int_shift[(i, c)];
                lw += ln_noise - dy * dy * inv_2s2;
                if q > 0 {
                    for j in 0..q {
                        centered[j] = views.u_cont[(i, j)] - state.theta_u[c].mean[j];
                    }
                    let sol = u_clusters[c]
                        .chol_l
                        .solve_lower_triangular(&centered)
                        .expect("Cholesky factor is nonsingular");
                    lw += u_clusters[c].log_norm - 0.5 * sol.norm_squared();
                }
                for (j, col) in views.u_cat.iter().enumerate() {
                    lw += log_phi[c][j][col.codes[i]];
                }
            }
            *lw_out = lw;
        }
        weights.push(logw);
    }
    Ok(weights)
}

/// Per-observation allocation probabilities: max-subtracted softmax of the
/// log-weights.
pub fn allocation_probabilities(
    y: &DVector<f64>,
    views: &DesignViews,
    state: &ParameterState,
) -> Result<Vec<Vec<f64>>> {
    let weights = allocation_log_weights(y, views, state)?;
    weights
        .into_iter()
        .enumerate()
        .map(|(i, logw)| {
            let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::Numerical(format!(
                    "update_allocations: all cluster weights vanished for observation {i}"
                )));
            }
            let mut w: Vec<f64> = logw.iter().map(|&l| (l - max).exp()).collect();
            let total: f64 = w.iter().sum();
            for v in &mut w {
                *v /= total;
            }
            Ok(w)
        })
        .collect()
}

/// Observed-data log-likelihood: sum over observations of
/// ln sum_c pi_c f_y f_u, via log-sum-exp of the allocation weights.
pub fn observed_data_loglik(
    y: &DVector<f64>,
    views: &DesignViews,
    state: &ParameterState,
) -> Result<f64> {
    let weights = allocation_log_weights(y, views, state)?;
    let mut total = 0.0;
    for (i, logw) in weights.iter().enumerate() {
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical(format!(
                "log-likelihood: all cluster weights vanished for observation {i}"
            )));
        }
        let sum: f64 = logw.iter().map(|&l| (l - max).exp()).sum();
        total += max + sum.ln();
    }
    Ok(total)
}

/// Block c, step 1: redraw every observation's cluster allocation.
pub fn update_allocations(
    y: &DVector<f64>,
    views: &DesignViews,
    state: &ParameterState,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let probs = allocation_probabilities(y, views, state)?;
    probs.iter().map(|w| sample_categorical(w, rng)).collect()
}

/// Block c, step 2: stick fractions from the cluster counts, final stick
/// pinned to 1, and the implied mixture weights.
pub fn update_weights(
    z: &[usize],
    zeta: f64,
    c_max: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut counts = vec![0.0f64; c_max];
    for &c in z {
        counts[c] += 1.0;
    }
    let mut suffix = vec![0.0f64; c_max];
    for c in (0..c_max - 1).rev() {
        suffix[c] = suffix[c + 1] + counts[c + 1];
    }
    let mut v = Vec::with_capacity(c_max);
    for c in 0..c_max - 1 {
        v.push(sample_beta(1.0 + counts[c], zeta + suffix[c], rng)?);
    }
    v.push(1.0);
    let pi = stick_to_weights(&v);
    Ok((v, pi))
}

/// Posterior (shape, rate) of the concentration parameter given the sticks:
/// shape a + C - 1 and rate 1/b - sum_{c < C} ln(1 - V_c). Only the C - 1
/// free sticks enter; sticks at 1 are clamped before the log.
pub fn concentration_posterior(v: &[f64], hyper: &Hyperparameters) -> (f64, f64) {
    let c_max = v.len();
    let log_sum: f64 = v[..c_max - 1]
        .iter()
        .map(|&vc| (1.0 - vc.min(1.0 - 1e-12)).ln())
        .sum();
    let shape = hyper.dp_shape + c_max as f64 - 1.0;
    let rate = 1.0 / hyper.dp_scale - log_sum;
    (shape, rate)
}

/// Block c, step 3: concentration-parameter draw.
pub fn update_concentration(
    v: &[f64],
    hyper: &Hyperparameters,
    rng: &mut RngStream,
) -> Result<f64> {
    let (shape, rate) = concentration_posterior(v, hyper);
    sample_gamma(shape, rate, rng)
}
