//! Design views: role-selected covariate blocks, per-individual row blocks,
//! and standardization bookkeeping.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::data::{CategoricalColumn, LongitudinalDataset};
use crate::model::spec::ModelSpec;
use crate::simulation::bspline::bspline_basis;

/// Standardization applied to one design column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStandardization {
    pub mean: f64,
    pub scale: f64,
    pub standardized: bool,
}

impl ColumnStandardization {
    fn none() -> Self {
        Self {
            mean: 0.0,
            scale: 1.0,
            standardized: false,
        }
    }
}

/// One covariate block (fixed effects, random effects, or interactions)
/// in fitting scale, together with the affine map back to the original scale.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDesign {
    pub matrix: DMatrix<f64>,
    pub cols: Vec<ColumnStandardization>,
    /// Position of the all-ones column within the block, when present.
    pub intercept_col: Option<usize>,
    pub names: Vec<String>,
}

impl BlockDesign {
    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Linear map `M` with `coef_original = M * coef_standardized`.
    ///
    /// Slopes on standardized columns rescale by `1/scale`; their centering
    /// offsets fold into the intercept column. Without an intercept the
    /// offsets cannot be reassigned and only the rescaling applies.
    pub fn to_original_matrix(&self) -> DMatrix<f64> {
        let p = self.ncols();
        let mut map = DMatrix::identity(p, p);
        for (j, col) in self.cols.iter().enumerate() {
            if !col.standardized {
                continue;
            }
            map[(j, j)] = 1.0 / col.scale;
            if let Some(ic) = self.intercept_col {
                map[(ic, j)] = -col.mean / col.scale;
            }
        }
        map
    }

    /// Inverse of [`Self::to_original_matrix`], built directly.
    pub fn to_standardized_matrix(&self) -> DMatrix<f64> {
        let p = self.ncols();
        let mut map = DMatrix::identity(p, p);
        for (j, col) in self.cols.iter().enumerate() {
            if !col.standardized {
                continue;
            }
            map[(j, j)] = col.scale;
            if let Some(ic) = self.intercept_col {
                map[(ic, j)] = col.mean;
            }
        }
        map
    }

    pub fn coefs_to_original(&self, coefs: &DVector<f64>) -> DVector<f64> {
        self.to_original_matrix() * coefs
    }

    pub fn coefs_to_standardized(&self, coefs: &DVector<f64>) -> DVector<f64> {
        self.to_standardized_matrix() * coefs
    }
}

/// Covariate views for one (dataset, spec) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignViews {
    pub fe: BlockDesign,
    pub re: BlockDesign,
    pub int: BlockDesign,
    /// Continuous clustering covariates in fitting scale.
    pub u_cont: DMatrix<f64>,
    pub u_cols: Vec<ColumnStandardization>,
    pub u_cat: Vec<CategoricalColumn>,
    pub rows_of_individual: Vec<Vec<usize>>,
    pub n: usize,
    pub m: usize,
}

impl DesignViews {
    pub fn q_cont(&self) -> usize {
        self.u_cont.ncols()
    }

    /// Map a cluster location from fitting scale back to the data scale.
    pub fn u_mean_to_original(&self, mean: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(mean.len(), |j, _| {
            mean[j] * self.u_cols[j].scale + self.u_cols[j].mean
        })
    }

    /// Map a cluster covariance from fitting scale back to the data scale.
    pub fn u_cov_to_original(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j, | {
            cov[(i, j)] * self.u_cols[i].scale * self.u_cols[j].scale
        })
    }
}

/// Row indices per cluster under the allocation `z`.
pub fn rows_by_cluster(z: &[usize], c_max: usize) -> Vec<Vec<usize>> {
    let mut rows = vec![Vec::new(); c_max];
    for (i, &c) in z.iter().enumerate() {
        rows[c].push(i);
    }
    rows
}

/// A column is treated as continuous when it takes more than two distinct
/// values; constant and binary columns are never standardized.
fn is_continuous(column: &[f64]) -> bool {
    let first = column[0];
    let mut second = None;
    for &v in column {
        if v != first && second.map_or(true, |s| v != s) {
            if second.is_some() {
                return true;
            }
            second = Some(v);
        }
    }
    false
}

fn standardize_column(column: &mut [f64]) -> ColumnStandardization {
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return ColumnStandardization::none();
    }
    let scale = var.sqrt();
    for v in column.iter_mut() {
        *v = (*v - mean) / scale;
    }
    ColumnStandardization {
        mean,
        scale,
        standardized: true,
    }
}

fn is_intercept(column: &[f64]) -> bool {
    column.iter().all(|&v| v == 1.0)
}

/// Build standardized role blocks, the per-individual row partition, and the
/// clustering-covariate views for the given spec.
pub fn build_design_views(data: &LongitudinalDataset, spec: &ModelSpec) -> Result<DesignViews> {
    spec.validate(data.x().ncols())?;
    let n = data.n();
    let p_x = data.x().ncols();

    // Extended design: raw x columns followed by generated spline columns.
    let mut ext_cols: Vec<Vec<f64>> = (0..p_x)
        .map(|j| data.x().column(j).iter().copied().collect())
        .collect();
    let mut ext_names: Vec<String> = data.x_names().to_vec();
    let mut generated = vec![false; p_x];
    if let Some(spline) = &spec.time_spline {
        let domain = spline.domain.unwrap_or_else(|| {
            let lo = data.time().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = data.time().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        });
        let basis = bspline_basis(data.time(), spline.degree, spline.n_basis, domain)?;
        for j in 0..spline.n_basis {
            ext_cols.push(basis.column(j).iter().copied().collect());
            ext_names.push(format!("spline{}", j + 1));
            generated.push(true);
        }
    }

    // Standardize each continuous non-generated column once, so a column
    // shared by several blocks gets a single (mean, scale).
    let mut standardizations = vec![ColumnStandardization::none(); ext_cols.len()];
    if spec.standardize {
        for (j, col) in ext_cols.iter_mut().enumerate() {
            if !generated[j] && is_continuous(col) {
                standardizations[j] = standardize_column(col);
            }
        }
    }

    let build_block = |cols: &[usize]| -> BlockDesign {
        let p = cols.len();
        let matrix = DMatrix::from_fn(n, p, |i, k| ext_cols[cols[k]][i]);
        let block_cols = cols.iter().map(|&j| standardizations[j].clone()).collect();
        let names = cols.iter().map(|&j| ext_names[j].clone()).collect();
        let intercept_col = cols
            .iter()
            .position(|&j| !standardizations[j].standardized && is_intercept(&ext_cols[j]));
        BlockDesign {
            matrix,
            cols: block_cols,
            intercept_col,
            names,
        }
    };
    let fe = build_block(&spec.fe_cols);
    let re = build_block(&spec.re_cols);
    let int = build_block(&spec.int_cols);

    let mut u_cont = data.u_cont().clone();
    let mut u_cols = vec![ColumnStandardization::none(); u_cont.ncols()];
    if spec.standardize {
        for j in 0..u_cont.ncols() {
            let mut col: Vec<f64> = u_cont.column(j).iter().copied().collect();
            if is_continuous(&col) {
                u_cols[j] = standardize_column(&mut col);
                for i in 0..n {
                    u_cont[(i, j)] = col[i];
                }
            }
        }
    }

    let mut rows_of_individual = vec![Vec::new(); data.m()];
    for (i, &j) in data.individual_of().iter().enumerate() {
        rows_of_individual[j].push(i);
    }

    Ok(DesignViews {
        fe,
        re,
        int,
        u_cont,
        u_cols,
        u_cat: data.u_cat().to_vec(),
        rows_of_individual,
        n,
        m: data.m(),
    })
}
