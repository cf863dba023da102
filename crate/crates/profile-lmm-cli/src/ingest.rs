//! CSV ingestion and emission.
//!
//! Schema: a header row with `id`, `time`, `y`, plus the covariate columns
//! named in the configuration. UTF-8, `.` decimal separator. Ids map to
//! contiguous individual indices in first-appearance order; categorical
//! clustering covariates are label-encoded with the mapping recorded.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use profile_lmm::model::{CategoricalColumn, LongitudinalDataset};
use profile_lmm::simulation::GroundTruth;
use profile_lmm::Error;

use crate::config::ParsedConfig;

pub struct IngestedData {
    pub dataset: LongitudinalDataset,
    /// Original id strings in individual-index order.
    pub ids: Vec<String>,
}

pub fn ingest_csv(path: &Path, cfg: &ParsedConfig) -> Result<IngestedData, Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| -> Result<usize, Error> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column `{name}`")))
    };
    let id_col = column("id")?;
    let time_col = column("time")?;
    let y_col = column("y")?;
    let x_cols: Vec<usize> = cfg
        .x_names
        .iter()
        .map(|n| column(n))
        .collect::<Result<_, _>>()?;
    let u_cont_cols: Vec<usize> = cfg
        .u_cont_names
        .iter()
        .map(|n| column(n))
        .collect::<Result<_, _>>()?;
    let u_cat_cols: Vec<usize> = cfg
        .u_cat_names
        .iter()
        .map(|n| column(n))
        .collect::<Result<_, _>>()?;

    let mut ids: Vec<String> = Vec::new();
    let mut id_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut seen_id_time: BTreeMap<(usize, String), usize> = BTreeMap::new();
    let mut individual_of = Vec::new();
    let mut time = Vec::new();
    let mut y = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut u_rows: Vec<Vec<f64>> = Vec::new();
    let mut cat_labels: Vec<Vec<String>> = vec![Vec::new(); u_cat_cols.len()];
    let mut cat_codes: Vec<Vec<usize>> = vec![Vec::new(); u_cat_cols.len()];

    for (idx, record) in reader.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = idx + 2;
        let record = record.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        let field = |col: usize| -> Result<&str, Error> {
            record
                .get(col)
                .ok_or_else(|| Error::Data(format!("row {row}: missing field")))
        };
        let numeric = |col: usize, name: &str| -> Result<f64, Error> {
            let raw = field(col)?;
            raw.parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "row {row}: column `{name}` has non-numeric value `{raw}`"
                ))
            })
        };
        let id = field(id_col)?.to_string();
        if id.is_empty() {
            return Err(Error::Data(format!("row {row}: empty id")));
        }
        let next_index = ids.len();
        let j = *id_index.entry(id.clone()).or_insert_with(|| {
            ids.push(id.clone());
            next_index
        });
        let t_raw = field(time_col)?.to_string();
        let t = numeric(time_col, "time")?;
        if let Some(prev) = seen_id_time.insert((j, t_raw), row) {
            return Err(Error::Data(format!(
                "row {row}: duplicate (id, time) pair (first seen at row {prev})"
            )));
        }
        individual_of.push(j);
        time.push(t);
        y.push(numeric(y_col, "y")?);
        x_rows.push(
            x_cols
                .iter()
                .zip(&cfg.x_names)
                .map(|(&c, n)| numeric(c, n))
                .collect::<Result<_, _>>()?,
        );
        u_rows.push(
            u_cont_cols
                .iter()
                .zip(&cfg.u_cont_names)
                .map(|(&c, n)| numeric(c, n))
                .collect::<Result<_, _>>()?,
        );
        for (k, &c) in u_cat_cols.iter().enumerate() {
            let raw = field(c)?.to_string();
            let code = match cat_labels[k].iter().position(|l| l == &raw) {
                Some(code) => code,
                None => {
                    cat_labels[k].push(raw);
                    cat_labels[k].len() - 1
                }
            };
            cat_codes[k].push(code);
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::Data(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }

    // X gains a leading intercept column.
    let p_x = 1 + cfg.x_names.len();
    let x = DMatrix::from_fn(n, p_x, |i, j| if j == 0 { 1.0 } else { x_rows[i][j - 1] });
    let mut x_names = vec!["intercept".to_string()];
    x_names.extend(cfg.x_names.iter().cloned());
    let u_cont = DMatrix::from_fn(n, cfg.u_cont_names.len(), |i, j| u_rows[i][j]);
    let u_cat: Vec<CategoricalColumn> = (0..u_cat_cols.len())
        .map(|k| {
            let mut col = CategoricalColumn::from_codes(
                &cfg.u_cat_names[k],
                cat_codes[k].clone(),
                cat_labels[k].len().max(2),
            )?;
            let mut levels = cat_labels[k].clone();
            while levels.len() < 2 {
                levels.push(format!("unused{}", levels.len()));
            }
            col.levels = levels;
            Ok::<_, Error>(col)
        })
        .collect::<Result<_, _>>()?;

    let dataset = LongitudinalDataset::new(
        individual_of,
        time,
        DVector::from_vec(y),
        x,
        x_names,
        u_cont,
        cfg.u_cont_names.clone(),
        u_cat,
    )?;
    Ok(IngestedData { dataset, ids })
}

/// Write a dataset in the ingestion schema (skipping the generated
/// intercept column). Ids are 1-based individual indices.
pub fn write_dataset_csv(data: &LongitudinalDataset, path: &Path) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = vec!["id".to_string(), "time".to_string(), "y".to_string()];
    let x_start = usize::from(data.x_names().first().is_some_and(|n| n == "intercept"));
    header.extend(data.x_names()[x_start..].iter().cloned());
    header.extend(data.u_cont_names().iter().cloned());
    for col in data.u_cat() {
        header.push(col.name.clone());
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..data.n() {
        let mut fields = vec![
            format!("{}", data.individual_of()[i] + 1),
            format!("{}", data.time()[i]),
            format!("{}", data.y()[i]),
        ];
        for j in x_start..data.x().ncols() {
            fields.push(format!("{}", data.x()[(i, j)]));
        }
        for j in 0..data.u_cont().ncols() {
            fields.push(format!("{}", data.u_cont()[(i, j)]));
        }
        for col in data.u_cat() {
            fields.push(col.levels[col.codes[i]].clone());
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// True labels (1-based) per observation.
pub fn write_truth_labels_csv(truth: &GroundTruth, path: &Path) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "observation,true_cluster")?;
    for (i, &label) in truth.labels.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, label + 1)?;
    }
    w.flush()?;
    Ok(())
}
