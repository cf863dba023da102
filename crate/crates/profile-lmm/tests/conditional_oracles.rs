//! Exact-oracle checks of the conjugate conditional updates.
//!
//! The oracles stay independent of the implementation path: the joint
//! (beta, gamma) update is compared against the stacked-model Gaussian
//! posterior computed from scratch, the random-effect update against the
//! direct covariance-form conditional with explicit dense inverses, and the
//! assignment-parameter update against a 2-D numeric grid posterior.

use nalgebra::{DMatrix, DVector};
use profile_lmm::conditionals::{
    beta_gamma_conditional, cluster_sufficient_stats, niw_posterior, random_effect_conditionals,
    update_assignment_params, ClusterSufficientStats,
};
use profile_lmm::model::{
    build_design_views, rows_by_cluster, CategoricalColumn, Hyperparameters, LongitudinalDataset,
    ModelSpec,
};
use profile_lmm::stochastics::{PsdMatrix, RngStream};
use rand_distr::{Distribution, StandardNormal};

const TOL: f64 = 1e-8;

fn synthetic_dataset(
    n: usize,
    m: usize,
    p_x: usize,
    q: usize,
    seed: u64,
) -> LongitudinalDataset {
    let mut rng = RngStream::new(seed, 0);
    let individual_of: Vec<usize> = (0..n).map(|i| i % m).collect();
    let time: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / n as f64).collect();
    let y = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let x = DMatrix::from_fn(n, p_x, |_, j| {
        if j == 0 {
            1.0
        } else {
            StandardNormal.sample(&mut rng)
        }
    });
    let u = DMatrix::from_fn(n, q, |_, _| StandardNormal.sample(&mut rng));
    LongitudinalDataset::new(
        individual_of,
        time,
        y,
        x,
        (0..p_x).map(|j| format!("x{j}")).collect(),
        u,
        (0..q).map(|j| format!("u{j}")).collect(),
        vec![],
    )
    .unwrap()
}

/// Stacked-model posterior for theta = (beta, gamma_1..gamma_C):
/// y - X_re eta = [F | 1{z=c} A]{ theta } + noise, prior
/// theta ~ N(0, blkdiag(sigma2/ridge I, W, ..., W)).
struct StackedOracle {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

#[allow(clippy::too_many_arguments)]
fn stacked_oracle(
    y: &DVector<f64>,
    fe: &DMatrix<f64>,
    int: &DMatrix<f64>,
    z: &[usize],
    c_max: usize,
    sigma2: f64,
    w_int: &DMatrix<f64>,
    ridge: f64,
) -> StackedOracle {
    let n = y.len();
    let p_fe = fe.ncols();
    let p_int = int.ncols();
    let dim = p_fe + c_max * p_int;
    let mut design = DMatrix::zeros(n, dim);
    for i in 0..n {
        for j in 0..p_fe {
            design[(i, j)] = fe[(i, j)];
        }
        for j in 0..p_int {
            design[(i, p_fe + z[i] * p_int + j)] = int[(i, j)];
        }
    }
    let mut prior_prec = DMatrix::zeros(dim, dim);
    let ridge_block = DMatrix::identity(p_fe, p_fe) * (ridge / sigma2);
    let w_inv = w_int.clone().try_inverse().expect("W_int invertible");
    for a in 0..p_fe {
        for b in 0..p_fe {
            prior_prec[(a, b)] = ridge_block[(a, b)];
        }
    }
    for c in 0..c_max {
        for a in 0..p_int {
            for b in 0..p_int {
                prior_prec[(p_fe + c * p_int + a, p_fe + c * p_int + b)] = w_inv[(a, b)];
            }
        }
    }
    let q = prior_prec + design.transpose() * &design / sigma2;
    let cov = q.try_inverse().expect("posterior precision invertible");
    let mean = &cov * (design.transpose() * y) / sigma2;
    StackedOracle { mean, cov }
}

#[test]
fn beta_gamma_joint_matches_stacked_gaussian_oracle() {
    // Tiny instance from the contract: n = 6, C = 2, one fe column.
    for (n, m, p_fe, p_int, c_max, seed) in [
        (6usize, 3usize, 1usize, 1usize, 2usize, 11u64),
        (10, 4, 2, 2, 3, 12),
    ] {
        let p_x = p_fe.max(p_int);
        let data = synthetic_dataset(n, m, p_x, 1, seed);
        let spec = ModelSpec {
            fe_cols: (0..p_fe).collect(),
            re_cols: vec![0],
            int_cols: (0..p_int).collect(),
            c_max,
            standardize: false,
            time_spline: None,
        };
        let views = build_design_views(&data, &spec).unwrap();
        let mut hyper = Hyperparameters::default_for(1, p_int, 1);
        hyper.ridge_precision = 0.5;
        let mut rng = RngStream::new(seed + 1, 0);
        let z: Vec<usize> = (0..n).map(|i| i % c_max).collect();
        let rows = rows_by_cluster(&z, c_max);
        let sigma2 = 1.3;
        let w_raw: DMatrix<f64> = {
            let a: DMatrix<f64> =
                DMatrix::from_fn(p_int, p_int, |_, _| StandardNormal.sample(&mut rng));
            &a * a.transpose() + DMatrix::<f64>::identity(p_int, p_int)
        };
        let w_int = PsdMatrix::new(w_raw.clone(), "test").unwrap();
        // Nonzero random effects to exercise the residual path.
        let eta: Vec<DVector<f64>> = (0..m)
            .map(|_| DVector::from_fn(1, |_, _| StandardNormal.sample(&mut rng)))
            .collect();

        let cond =
            beta_gamma_conditional(data.y(), &views, &rows, &eta, sigma2, &w_int, &hyper).unwrap();

        // Oracle on the random-effect-adjusted outcome.
        let mut resid = data.y().clone();
        for i in 0..n {
            resid[i] -= views.re.matrix.row(i).transpose().dot(&eta[data.individual_of()[i]]);
        }
        let oracle = stacked_oracle(
            &resid,
            &views.fe.matrix,
            &views.int.matrix,
            &z,
            c_max,
            sigma2,
            &w_raw,
            hyper.ridge_precision,
        );

        // Implied joint mean and covariance of the two-stage draw.
        let p_total = p_fe + c_max * p_int;
        let mut mean = DVector::zeros(p_total);
        let mut cov = DMatrix::zeros(p_total, p_total);
        for j in 0..p_fe {
            mean[j] = cond.beta_mean[j];
            for k in 0..p_fe {
                cov[(j, k)] = cond.beta_cov[(j, k)];
            }
        }
        for (c, g) in cond.clusters.iter().enumerate() {
            let gmean = &g.base_mean + &g.beta_map * &cond.beta_mean;
            let cross = &g.beta_map * &cond.beta_cov;
            for a in 0..p_int {
                mean[p_fe + c * p_int + a] = gmean[a];
                for k in 0..p_fe {
                    cov[(p_fe + c * p_int + a, k)] = cross[(a, k)];
                    cov[(k, p_fe + c * p_int + a)] = cross[(a, k)];
                }
            }
            for (c2, g2) in cond.clusters.iter().enumerate() {
                let block = &g.beta_map * &cond.beta_cov * g2.beta_map.transpose();
                for a in 0..p_int {
                    for b in 0..p_int {
                        let mut v = block[(a, b)];
                        if c == c2 {
                            v += g.cov[(a, b)];
                        }
                        cov[(p_fe + c * p_int + a, p_fe + c2 * p_int + b)] = v;
                    }
                }
            }
        }

        for j in 0..p_total {
            assert!(
                (mean[j] - oracle.mean[j]).abs() < TOL,
                "seed {seed} mean[{j}]: {} vs {}",
                mean[j],
                oracle.mean[j]
            );
            for k in 0..p_total {
                assert!(
                    (cov[(j, k)] - oracle.cov[(j, k)]).abs() < TOL,
                    "seed {seed} cov[{j},{k}]: {} vs {}",
                    cov[(j, k)],
                    oracle.cov[(j, k)]
                );
            }
        }

        // Monte Carlo moments of the actual draws against the oracle.
        let draws = 100_000;
        let mut acc = DVector::<f64>::zeros(p_total);
        for _ in 0..draws {
            let (beta, gammas) = cond.sample(&mut rng);
            for j in 0..p_fe {
                acc[j] += beta[j];
            }
            for (c, g) in gammas.iter().enumerate() {
                for a in 0..p_int {
                    acc[p_fe + c * p_int + a] += g[a];
                }
            }
        }
        for j in 0..p_total {
            let se = (oracle.cov[(j, j)] / draws as f64).sqrt();
            let mc = acc[j] / draws as f64;
            assert!(
                (mc - oracle.mean[j]).abs() < 3.0 * se + 1e-12,
                "seed {seed} MC mean[{j}]: {mc} vs {} (se {se})",
                oracle.mean[j]
            );
        }
    }
}

#[test]
fn random_effects_match_direct_covariance_oracle() {
    // Three observations for the tested individual; the oracle uses the
    // n_j x n_j covariance form with explicit inverses.
    let n = 9;
    let m = 3;
    let data = synthetic_dataset(n, m, 2, 1, 31);
    let spec = ModelSpec {
        fe_cols: vec![0, 1],
        re_cols: vec![0, 1],
        int_cols: vec![0],
        c_max: 2,
        standardize: false,
        time_spline: None,
    };
    let views = build_design_views(&data, &spec).unwrap();
    let mut rng = RngStream::new(77, 0);
    let beta = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
    let gamma: Vec<DVector<f64>> = (0..2)
        .map(|_| DVector::from_fn(1, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let z: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let sigma2 = 0.7;
    let w_raw = DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.9]);
    let w_re = PsdMatrix::new(w_raw.clone(), "test").unwrap();

    let conds =
        random_effect_conditionals(data.y(), &views, &beta, &gamma, &z, sigma2, &w_re).unwrap();

    // Residual without the random-effect part.
    let mut resid = data.y() - &views.fe.matrix * &beta;
    for i in 0..n {
        resid[i] -= views.int.matrix.row(i).transpose().dot(&gamma[z[i]]);
    }
    for (j, rows) in views.rows_of_individual.iter().enumerate() {
        let r = views.re.matrix.select_rows(rows.iter());
        let d = DVector::from_iterator(rows.len(), rows.iter().map(|&i| resid[i]));
        let s = DMatrix::identity(rows.len(), rows.len()) * sigma2 + &r * &w_raw * r.transpose();
        let s_inv = s.try_inverse().expect("S invertible");
        let mean = &w_raw * r.transpose() * &s_inv * &d;
        let cov = &w_raw - &w_raw * r.transpose() * &s_inv * &r * &w_raw;
        let got_cov = conds[j].covariance();
        for a in 0..2 {
            assert!(
                (conds[j].mean[a] - mean[a]).abs() < TOL,
                "individual {j} mean[{a}]: {} vs {}",
                conds[j].mean[a],
                mean[a]
            );
            for b in 0..2 {
                assert!(
                    (got_cov[(a, b)] - cov[(a, b)]).abs() < TOL,
                    "individual {j} cov[{a},{b}]"
                );
            }
        }
    }
}

/// Grid posterior over (mu, s) for a 1-D zero-mean NIW prior with a single
/// observation; trapezoid integration on a dense grid.
struct GridPosterior {
    e_mu: f64,
    var_mu: f64,
    e_prec: f64,
}

fn grid_oracle(obs: f64, lambda0: f64, nu0: f64, phi0: f64) -> GridPosterior {
    // The mu-marginal is a t with nu_n dof: the grid must reach far into
    // the tails before its variance settles.
    let pts = 3000;
    let mu_grid: Vec<f64> = (0..pts)
        .map(|k| -20.0 + 40.0 * k as f64 / (pts - 1) as f64)
        .collect();
    let s_grid: Vec<f64> = (0..pts)
        .map(|k| (-10.0 + 22.0 * k as f64 / (pts - 1) as f64).exp())
        .collect();
    // Log unnormalized posterior: prior N(mu; 0, s/lambda0) *
    // InvGamma(s; nu0/2, phi0/2) * N(obs; mu, s).
    let logpost = |mu: f64, s: f64| -> f64 {
        let prior_mu = -0.5 * (s / lambda0).ln() - 0.5 * mu * mu * lambda0 / s;
        let prior_s = -(nu0 / 2.0 + 1.0) * s.ln() - phi0 / (2.0 * s);
        let lik = -0.5 * s.ln() - 0.5 * (obs - mu) * (obs - mu) / s;
        prior_mu + prior_s + lik
    };
    let mut max_lp = f64::NEG_INFINITY;
    for &mu in &mu_grid {
        for &s in &s_grid {
            max_lp = max_lp.max(logpost(mu, s));
        }
    }
    let (mut mass, mut e_mu, mut e_mu2, mut e_prec) = (0.0, 0.0, 0.0, 0.0);
    for (ki, &mu) in mu_grid.iter().enumerate() {
        let dmu = if ki == 0 {
            mu_grid[1] - mu_grid[0]
        } else {
            mu_grid[ki] - mu_grid[ki - 1]
        };
        for (kj, &s) in s_grid.iter().enumerate() {
            let ds = if kj == 0 {
                s_grid[1] - s_grid[0]
            } else {
                s_grid[kj] - s_grid[kj - 1]
            };
            let w = (logpost(mu, s) - max_lp).exp() * dmu * ds;
            mass += w;
            e_mu += w * mu;
            e_mu2 += w * mu * mu;
            e_prec += w / s;
        }
    }
    GridPosterior {
        e_mu: e_mu / mass,
        var_mu: e_mu2 / mass - (e_mu / mass).powi(2),
        e_prec: e_prec / mass,
    }
}

#[test]
fn assignment_params_match_grid_integration_oracle() {
    // q = 1, lambda0 = 1, Phi0 = 1, nu0 = 3, single observation 2.0.
    let mut hyper = Hyperparameters::default_for(1, 1, 1);
    hyper.assign_shrinkage = 1.0;
    hyper.assign_dof = 3.0;
    hyper.assign_scale = PsdMatrix::identity(1);

    let mean = DVector::from_row_slice(&[2.0]);
    let scatter = DMatrix::zeros(1, 1);
    let (loc, lambda_n, nu_n, scale) = niw_posterior(1, &mean, &scatter, &hyper);

    // Deterministic part: the posterior location is exactly 2/(1+1).
    assert!((loc[0] - 1.0).abs() < TOL);
    assert_eq!(lambda_n, 2.0);
    assert_eq!(nu_n, 4.0);
    // Scale picks up the shrinkage cross term: 1 + 0 + (1*1/2) * 4 = 3.
    assert!((scale[(0, 0)] - 3.0).abs() < TOL);

    // Grid oracle over the full posterior density.
    let grid = grid_oracle(2.0, 1.0, 3.0, 1.0);
    // Analytic: E[mu] = 1, Var(mu) = E[s]/lambda_n = (3/2)/2,
    // E[1/s] = nu_n/phi_n = 4/3. Var carries a small t4 tail-truncation
    // residual at this grid extent.
    assert!((grid.e_mu - 1.0).abs() < 1e-3, "grid E[mu] = {}", grid.e_mu);
    assert!(
        (grid.var_mu - 0.75).abs() < 6e-3,
        "grid Var[mu] = {}",
        grid.var_mu
    );
    assert!(
        (grid.e_prec - 4.0 / 3.0).abs() < 1e-3,
        "grid E[1/s] = {}",
        grid.e_prec
    );

    // Monte Carlo moments of the update's draws against the grid oracle.
    let stats = ClusterSufficientStats {
        counts: vec![1],
        means: vec![mean],
        scatters: vec![scatter],
        cat_counts: vec![vec![]],
    };
    let mut rng = RngStream::new(404, 0);
    let draws = 100_000;
    let (mut acc_mu, mut acc_mu2, mut acc_prec) = (0.0, 0.0, 0.0);
    for _ in 0..draws {
        let params = update_assignment_params(&stats, &hyper, &mut rng).unwrap();
        let mu = params[0].mean[0];
        acc_mu += mu;
        acc_mu2 += mu * mu;
        acc_prec += 1.0 / params[0].cov.matrix()[(0, 0)];
    }
    let nf = draws as f64;
    let mc_mu = acc_mu / nf;
    let mc_var = acc_mu2 / nf - mc_mu * mc_mu;
    let mc_prec = acc_prec / nf;
    // SE of the mean uses Var(mu) = 0.75; SE of E[1/s] uses
    // Var(Gamma(2, 2/3)) = 2 / 1.5^2.
    let se_mu = (0.75f64 / nf).sqrt();
    let se_prec = ((2.0f64 / 1.5 / 1.5) / nf).sqrt();
    assert!((mc_mu - grid.e_mu).abs() < 3.0 * se_mu + 2e-3, "MC mu {mc_mu}");
    assert!(
        (mc_prec - grid.e_prec).abs() < 3.0 * se_prec + 5e-3,
        "MC precision {mc_prec}"
    );
    assert!((mc_var - grid.var_mu).abs() < 0.03, "MC Var(mu) {mc_var}");
}

#[test]
fn empty_cluster_draws_follow_the_prior_moments() {
    let mut hyper = Hyperparameters::default_for(1, 1, 1);
    hyper.assign_shrinkage = 2.0;
    hyper.assign_dof = 6.0;
    hyper.assign_scale = PsdMatrix::scaled_identity(1, 4.0).unwrap();
    let stats = ClusterSufficientStats {
        counts: vec![0],
        means: vec![DVector::zeros(1)],
        scatters: vec![DMatrix::zeros(1, 1)],
        cat_counts: vec![vec![vec![0.0, 0.0]]],
    };
    let mut rng = RngStream::new(5150, 0);
    let draws = 100_000;
    let (mut acc_cov, mut acc_mu, mut acc_phi) = (0.0, 0.0, 0.0);
    for _ in 0..draws {
        let params = update_assignment_params(&stats, &hyper, &mut rng).unwrap();
        acc_cov += params[0].cov.matrix()[(0, 0)];
        acc_mu += params[0].mean[0];
        acc_phi += params[0].cat_probs[0][0];
    }
    let nf = draws as f64;
    // Prior: Sigma ~ IW(4, 6) in 1-D = InvGamma(3, 2), mean 1; mu | Sigma ~
    // N(0, Sigma/2); phi ~ Dirichlet(1, 1), mean 1/2.
    assert!((acc_cov / nf - 1.0).abs() < 0.02, "{}", acc_cov / nf);
    assert!((acc_mu / nf).abs() < 0.01, "{}", acc_mu / nf);
    assert!((acc_phi / nf - 0.5).abs() < 0.005, "{}", acc_phi / nf);

    // Categorical column with observed counts updates the Dirichlet.
    let stats = ClusterSufficientStats {
        counts: vec![3],
        means: vec![DVector::from_row_slice(&[0.5])],
        scatters: vec![DMatrix::zeros(1, 1)],
        cat_counts: vec![vec![vec![2.0, 1.0]]],
    };
    let mut acc = 0.0;
    for _ in 0..draws {
        let params = update_assignment_params(&stats, &hyper, &mut rng).unwrap();
        acc += params[0].cat_probs[0][0];
    }
    // Dirichlet(1+2, 1+1) mean 3/5.
    assert!((acc / nf - 0.6).abs() < 0.005, "{}", acc / nf);
}
