//! Model specification and prior hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastics::PsdMatrix;

/// Random-effect design generated from observation times: a clamped
/// B-spline basis appended as extra design columns after the `x` columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub n_basis: usize,
    pub degree: usize,
    /// Evaluation interval; `None` uses the observed time range.
    pub domain: Option<(f64, f64)>,
}

/// Column-role assignment and mixture truncation.
///
/// Index lists refer to columns of the extended design `[x | spline]`,
/// where the spline block (when configured) occupies indices
/// `p_x..p_x + n_basis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub fe_cols: Vec<usize>,
    pub re_cols: Vec<usize>,
    pub int_cols: Vec<usize>,
    /// Truncation level: maximum number of mixture clusters.
    pub c_max: usize,
    /// Z-score continuous covariate columns (both x and u) before fitting.
    pub standardize: bool,
    pub time_spline: Option<SplineSpec>,
}

impl ModelSpec {
    /// Total number of extended design columns for a dataset with `p_x`
    /// regression covariates.
    pub fn extended_cols(&self, p_x: usize) -> usize {
        p_x + self.time_spline.as_ref().map_or(0, |s| s.n_basis)
    }

    pub fn validate(&self, p_x: usize) -> Result<()> {
        if self.fe_cols.is_empty() {
            return Err(Error::Spec("fe_cols must not be empty".into()));
        }
        if self.int_cols.is_empty() {
            return Err(Error::Spec(
                "int_cols must not be empty (use an intercept for a pure cluster offset)".into(),
            ));
        }
        if self.re_cols.is_empty() {
            return Err(Error::Spec("re_cols must not be empty".into()));
        }
        if self.c_max < 2 {
            return Err(Error::Spec(format!(
                "truncation level C = {} must be at least 2",
                self.c_max
            )));
        }
        if let Some(spline) = &self.time_spline {
            if spline.n_basis < spline.degree + 1 {
                return Err(Error::Spec(format!(
                    "spline n_basis {} must be at least degree+1 = {}",
                    spline.n_basis,
                    spline.degree + 1
                )));
            }
            if let Some((lo, hi)) = spline.domain {
                if !(hi > lo) {
                    return Err(Error::Spec(format!("spline domain [{lo}, {hi}] is empty")));
                }
            }
        }
        let total = self.extended_cols(p_x);
        for (role, cols) in [
            ("fe", &self.fe_cols),
            ("re", &self.re_cols),
            ("int", &self.int_cols),
        ] {
            if let Some(&bad) = cols.iter().find(|&&c| c >= total) {
                return Err(Error::Spec(format!(
                    "{role}_cols index {bad} out of range for {total} design columns"
                )));
            }
        }
        Ok(())
    }
}

/// Prior hyperparameters for every sampler block.
///
/// The error precision uses a (shape, rate) gamma; the stick-breaking
/// concentration uses the (shape, scale) gamma. The mean of the
/// normal-inverse-Wishart assignment prior is fixed at zero, which is why
/// continuous clustering covariates are standardized by default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Ridge precision scale of the fixed effects: beta ~ N(0, sigma2/ridge * I).
    pub ridge_precision: f64,
    /// Gamma shape for the error precision 1/sigma2.
    pub noise_shape: f64,
    /// Gamma rate for the error precision.
    pub noise_rate: f64,
    /// Inverse-Wishart scale for the random-effect covariance.
    pub re_cov_scale: PsdMatrix,
    pub re_cov_dof: f64,
    /// Inverse-Wishart scale for the cluster-effect covariance.
    pub int_cov_scale: PsdMatrix,
    pub int_cov_dof: f64,
    /// Shrinkage factor lambda0 of the assignment NIW prior.
    pub assign_shrinkage: f64,
    pub assign_dof: f64,
    pub assign_scale: PsdMatrix,
    /// Symmetric Dirichlet concentration for categorical covariates.
    pub cat_concentration: f64,
    /// Gamma (shape, scale) prior for the concentration parameter.
    pub dp_shape: f64,
    pub dp_scale: f64,
}

impl Hyperparameters {
    /// Weakly informative defaults sized for standardized covariates.
    pub fn default_for(p_re: usize, p_int: usize, q_cont: usize) -> Self {
        let iw = |dim: usize| {
            let dof = dim as f64 + 4.0;
            // Scale chosen so the prior mean is the identity.
            let scale = PsdMatrix::scaled_identity(dim, dof - dim as f64 - 1.0)
                .expect("identity scale is PD");
            (scale, dof)
        };
        let (re_cov_scale, re_cov_dof) = iw(p_re);
        let (int_cov_scale, int_cov_dof) = iw(p_int);
        let (assign_scale, assign_dof) = iw(q_cont.max(1));
        Self {
            ridge_precision: 0.01,
            noise_shape: 3.0,
            noise_rate: 2.0,
            re_cov_scale,
            re_cov_dof,
            int_cov_scale,
            int_cov_dof,
            assign_shrinkage: 0.1,
            assign_dof,
            assign_scale,
            cat_concentration: 1.0,
            dp_shape: 2.0,
            dp_scale: 1.0,
        }
    }

    pub fn validate(&self, p_re: usize, p_int: usize, q_cont: usize) -> Result<()> {
        for (name, v) in [
            ("ridge_precision", self.ridge_precision),
            ("noise_shape", self.noise_shape),
            ("noise_rate", self.noise_rate),
            ("assign_shrinkage", self.assign_shrinkage),
            ("cat_concentration", self.cat_concentration),
            ("dp_shape", self.dp_shape),
            ("dp_scale", self.dp_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Spec(format!(
                    "hyperparameter {name} = {v} must be positive and finite"
                )));
            }
        }
        let dims = [
            ("re_cov_scale", self.re_cov_scale.dim(), p_re),
            ("int_cov_scale", self.int_cov_scale.dim(), p_int),
        ];
        for (name, got, want) in dims {
            if got != want {
                return Err(Error::Spec(format!(
                    "{name} has dim {got}, expected {want}"
                )));
            }
        }
        if q_cont > 0 && self.assign_scale.dim() != q_cont {
            return Err(Error::Spec(format!(
                "assign_scale has dim {}, expected {q_cont}",
                self.assign_scale.dim()
            )));
        }
        for (name, dof, dim) in [
            ("re_cov_dof", self.re_cov_dof, p_re),
            ("int_cov_dof", self.int_cov_dof, p_int),
            ("assign_dof", self.assign_dof, q_cont),
        ] {
            if !(dof > dim as f64 - 1.0) {
                return Err(Error::Spec(format!(
                    "{name} = {dof} must exceed dim-1 = {}",
                    dim as f64 - 1.0
                )));
            }
        }
        Ok(())
    }
}
