//! Longitudinal dataset: outcome, regression covariates, and clustering
//! covariates with an observation-to-individual mapping.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One categorical clustering covariate, label-encoded as `0..n_categories`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalColumn {
    pub name: String,
    pub codes: Vec<usize>,
    pub n_categories: usize,
    /// Original level labels, indexed by code (used when reporting).
    pub levels: Vec<String>,
}

impl CategoricalColumn {
    pub fn from_codes(name: &str, codes: Vec<usize>, n_categories: usize) -> Result<Self> {
        let levels = (0..n_categories).map(|k| k.to_string()).collect();
        let col = Self {
            name: name.to_string(),
            codes,
            n_categories,
            levels,
        };
        col.validate()?;
        Ok(col)
    }

    fn validate(&self) -> Result<()> {
        if self.n_categories < 2 {
            return Err(Error::Data(format!(
                "categorical covariate {} must have at least 2 categories",
                self.name
            )));
        }
        if self.levels.len() != self.n_categories {
            return Err(Error::Data(format!(
                "categorical covariate {}: {} labels for {} categories",
                self.name,
                self.levels.len(),
                self.n_categories
            )));
        }
        if let Some(&bad) = self.codes.iter().find(|&&c| c >= self.n_categories) {
            return Err(Error::Data(format!(
                "categorical covariate {}: code {bad} out of range 0..{}",
                self.name, self.n_categories
            )));
        }
        Ok(())
    }
}

/// Observations of a continuous outcome with regression covariates `x`,
/// clustering covariates `u`, and a mapping from observation to individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalDataset {
    n: usize,
    m: usize,
    individual_of: Vec<usize>,
    time: Vec<f64>,
    y: DVector<f64>,
    x: DMatrix<f64>,
    x_names: Vec<String>,
    u_cont: DMatrix<f64>,
    u_cont_names: Vec<String>,
    u_cat: Vec<CategoricalColumn>,
}

impl LongitudinalDataset {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        individual_of: Vec<usize>,
        time: Vec<f64>,
        y: DVector<f64>,
        x: DMatrix<f64>,
        x_names: Vec<String>,
        u_cont: DMatrix<f64>,
        u_cont_names: Vec<String>,
        u_cat: Vec<CategoricalColumn>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Data("dataset has no observations".into()));
        }
        for (label, len) in [
            ("individual mapping", individual_of.len()),
            ("time", time.len()),
            ("x rows", x.nrows()),
            ("u rows", u_cont.nrows()),
        ] {
            if len != n {
                return Err(Error::Data(format!(
                    "{label} has length {len}, expected {n}"
                )));
            }
        }
        if x_names.len() != x.ncols() || u_cont_names.len() != u_cont.ncols() {
            return Err(Error::Data("column name count mismatch".into()));
        }
        let m = individual_of.iter().copied().max().map_or(0, |j| j + 1);
        let mut seen = vec![false; m];
        for &j in &individual_of {
            seen[j] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Data(
                "individual indices are not contiguous: some individual owns no observation"
                    .into(),
            ));
        }
        for (i, &t) in time.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Data(format!("non-finite time at observation {i}")));
            }
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite outcome at observation {i}"
                )));
            }
        }
        if x.iter().any(|v| !v.is_finite()) || u_cont.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite covariate value".into()));
        }
        for col in &u_cat {
            col.validate()?;
            if col.codes.len() != n {
                return Err(Error::Data(format!(
                    "categorical covariate {} has {} rows, expected {n}",
                    col.name,
                    col.codes.len()
                )));
            }
        }
        Ok(Self {
            n,
            m,
            individual_of,
            time,
            y,
            x,
            x_names,
            u_cont,
            u_cont_names,
            u_cat,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn individual_of(&self) -> &[usize] {
        &self.individual_of
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn u_cont(&self) -> &DMatrix<f64> {
        &self.u_cont
    }

    pub fn u_cont_names(&self) -> &[String] {
        &self.u_cont_names
    }

    pub fn u_cat(&self) -> &[CategoricalColumn] {
        &self.u_cat
    }

    /// Number of observations per individual.
    pub fn individual_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.m];
        for &j in &self.individual_of {
            sizes[j] += 1;
        }
        sizes
    }
}
