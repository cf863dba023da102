//! `postprocess`: similarity matrix, representative clustering, pooled
//! cluster summaries on the original covariate scale, and contrasts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use profile_lmm::model::{build_design_views, load_chain, ChainStore, DesignViews};
use profile_lmm::postprocess::{
    aggregate_cluster_params, build_similarity, cluster_effect_contrasts,
    representative_clustering, save_similarity, AffineMap, ClusterSummary, ContrastTable,
    ParamKind, RepresentativeClustering,
};
use profile_lmm::Error;
use serde::Serialize;

use crate::commands::{ensure_dir, evenly_spaced, quantile, write_json};
use crate::config::ParsedConfig;
use crate::ingest::IngestedData;

#[derive(Serialize)]
struct FixedEffectRow {
    name: String,
    mean: f64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct SummaryFile {
    kept_draws: usize,
    subset_size: usize,
    k: usize,
    selection: String,
    cluster_sizes: Vec<usize>,
    /// 1-based ids of clusters dropped from reporting by the size filter.
    excluded_clusters: Vec<usize>,
    min_cluster_size: usize,
    credible_level: f64,
    contrast_level: f64,
    reference_cluster: usize,
    fixed_effects: Vec<FixedEffectRow>,
    cluster_effects: ClusterSummary,
    cluster_locations: ClusterSummary,
    cluster_covariances: ClusterSummary,
    cluster_cat_probs: Option<ClusterSummary>,
    contrasts: ContrastTable,
}

fn gamma_transform(views: &DesignViews) -> AffineMap {
    AffineMap {
        matrix: views.int.to_original_matrix(),
        offset: DVector::zeros(views.int.ncols()),
    }
}

fn mu_transform(views: &DesignViews) -> AffineMap {
    let q = views.q_cont();
    AffineMap {
        matrix: DMatrix::from_fn(q, q, |i, j| {
            if i == j {
                views.u_cols[i].scale
            } else {
                0.0
            }
        }),
        offset: DVector::from_fn(q, |i, _| views.u_cols[i].mean),
    }
}

fn sigma_transform(views: &DesignViews) -> AffineMap {
    let q = views.q_cont();
    AffineMap {
        matrix: DMatrix::from_fn(q * q, q * q, |a, b| {
            if a == b {
                views.u_cols[a / q].scale * views.u_cols[a % q].scale
            } else {
                0.0
            }
        }),
        offset: DVector::zeros(q * q),
    }
}

/// Per-draw fixed effects mapped to the original scale, summarized with
/// equal-tailed intervals.
fn fixed_effect_rows(
    chain: &ChainStore,
    views: &DesignViews,
    level: f64,
) -> Vec<FixedEffectRow> {
    let map = views.fe.to_original_matrix();
    let h = chain.kept();
    let p = views.fe.ncols();
    let mut columns = vec![Vec::with_capacity(h); p];
    for draw in &chain.draws {
        let orig = &map * &draw.beta;
        for j in 0..p {
            columns[j].push(orig[j]);
        }
    }
    (0..p)
        .map(|j| {
            let mut xs = columns[j].clone();
            xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let mean = xs.iter().sum::<f64>() / h as f64;
            FixedEffectRow {
                name: views.fe.names[j].clone(),
                mean,
                lower: quantile(&xs, 0.5 - level / 2.0),
                upper: quantile(&xs, 0.5 + level / 2.0),
            }
        })
        .collect()
}

fn write_zstar_csv(
    path: &Path,
    rep: &RepresentativeClustering,
    ids: &[String],
    individual_of: &[usize],
) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "observation,id,cluster")?;
    for (pos, &obs) in rep.subset_ids.iter().enumerate() {
        writeln!(
            w,
            "{},{},{}",
            obs + 1,
            ids[individual_of[obs]],
            rep.labels[pos] + 1
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_effects_csv(path: &Path, summary: &ClusterSummary, names: &[String]) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "cluster,n_obs,coordinate,mean,lower,upper")?;
    for cluster in &summary.clusters {
        if !cluster.present {
            continue;
        }
        for (j, coord) in cluster.coords.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                cluster.cluster + 1,
                cluster.n_obs,
                names.get(j).cloned().unwrap_or_else(|| format!("c{j}")),
                coord.mean,
                coord.lower.unwrap_or(coord.mean),
                coord.upper.unwrap_or(coord.mean),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_contrasts_csv(path: &Path, table: &ContrastTable, names: &[String]) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "cluster,reference,coordinate,mean,lower,upper")?;
    for row in &table.rows {
        if row.coords.is_empty() {
            continue;
        }
        for (j, coord) in row.coords.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.cluster + 1,
                table.reference + 1,
                names.get(j).cloned().unwrap_or_else(|| format!("c{j}")),
                coord.mean,
                coord.lower.unwrap_or(coord.mean),
                coord.upper.unwrap_or(coord.mean),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn human_tables(summary: &SummaryFile, int_names: &[String]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "representative clustering: k = {} ({}), subset of {} observations\n",
        summary.k, summary.selection, summary.subset_size
    ));
    out.push_str("cluster sizes: ");
    for (c, s) in summary.cluster_sizes.iter().enumerate() {
        out.push_str(&format!("{}:{s} ", c + 1));
    }
    out.push('\n');
    if !summary.excluded_clusters.is_empty() {
        out.push_str(&format!(
            "excluded from reports (fewer than {} observations): {:?}\n",
            summary.min_cluster_size, summary.excluded_clusters
        ));
    }
    out.push_str(&format!(
        "\nfixed effects (original scale, {:.0}% intervals)\n",
        summary.credible_level * 100.0
    ));
    for row in &summary.fixed_effects {
        out.push_str(&format!(
            "  {:>12}: {:>9.4}  [{:>9.4}, {:>9.4}]\n",
            row.name, row.mean, row.lower, row.upper
        ));
    }
    out.push_str(&format!(
        "\ncluster effects (original scale, {:.0}% intervals)\n",
        summary.credible_level * 100.0
    ));
    for cluster in &summary.cluster_effects.clusters {
        if !cluster.present {
            continue;
        }
        out.push_str(&format!("  cluster {} (n = {})\n", cluster.cluster + 1, cluster.n_obs));
        for (j, coord) in cluster.coords.iter().enumerate() {
            out.push_str(&format!(
                "    {:>12}: {:>9.4}  [{:>9.4}, {:>9.4}]\n",
                int_names.get(j).cloned().unwrap_or_default(),
                coord.mean,
                coord.lower.unwrap_or(coord.mean),
                coord.upper.unwrap_or(coord.mean),
            ));
        }
    }
    out.push_str(&format!(
        "\ncontrasts vs cluster {} ({:.0}% intervals)\n",
        summary.reference_cluster,
        summary.contrast_level * 100.0
    ));
    for row in &summary.contrasts.rows {
        if row.coords.is_empty() || row.cluster == summary.contrasts.reference {
            continue;
        }
        out.push_str(&format!("  cluster {}\n", row.cluster + 1));
        for (j, coord) in row.coords.iter().enumerate() {
            out.push_str(&format!(
                "    {:>12}: {:>9.4}  [{:>9.4}, {:>9.4}]\n",
                int_names.get(j).cloned().unwrap_or_default(),
                coord.mean,
                coord.lower.unwrap_or(coord.mean),
                coord.upper.unwrap_or(coord.mean),
            ));
        }
    }
    out
}

pub fn run(
    cfg: &ParsedConfig,
    data: &IngestedData,
    chain_dir: &Path,
    out: &Path,
) -> Result<(), Error> {
    ensure_dir(out)?;
    let chain = load_chain(chain_dir)?;
    let views = build_design_views(&data.dataset, &cfg.spec)?;
    if chain.meta.dims.n != views.n {
        return Err(Error::Data(format!(
            "chain was fit on {} observations but the dataset has {}",
            chain.meta.dims.n, views.n
        )));
    }
    if chain.kept() == 0 {
        return Err(Error::Data("chain has no kept draws".into()));
    }

    let subset = evenly_spaced(views.n, cfg.post.similarity_subset);
    let sim = build_similarity(&chain, &subset)?;
    save_similarity(&sim, &out.join("similarity.bin"))?;

    let (rep, selection) = if cfg.post.k >= 2 {
        (
            representative_clustering(&sim, Some(cfg.post.k), cfg.post.k_max)?,
            "fixed".to_string(),
        )
    } else {
        (
            representative_clustering(&sim, None, cfg.post.k_max)?,
            "silhouette".to_string(),
        )
    };
    write_zstar_csv(
        &out.join("zstar.csv"),
        &rep,
        &data.ids,
        data.dataset.individual_of(),
    )?;

    let level = cfg.post.credible_level;
    let gamma = aggregate_cluster_params(
        &chain,
        &rep,
        ParamKind::Gamma,
        level,
        Some(&gamma_transform(&views)),
    )?;
    let mu = aggregate_cluster_params(
        &chain,
        &rep,
        ParamKind::Mu,
        level,
        Some(&mu_transform(&views)),
    )?;
    let sigma = aggregate_cluster_params(
        &chain,
        &rep,
        ParamKind::Sigma,
        level,
        Some(&sigma_transform(&views)),
    )?;
    let phi = if views.u_cat.is_empty() {
        None
    } else {
        Some(aggregate_cluster_params(
            &chain,
            &rep,
            ParamKind::Phi,
            level,
            None,
        )?)
    };

    // Size filter: clusters below the threshold stay in the data files but
    // are excluded from reporting and contrasts.
    let min_cluster_size =
        (cfg.post.min_cluster_frac * subset.len() as f64).ceil().max(1.0) as usize;
    let excluded: Vec<usize> = rep
        .sizes
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < min_cluster_size)
        .map(|(c, _)| c + 1)
        .collect();

    let reference = cfg.post.reference_cluster;
    if reference == 0 || reference > rep.k {
        return Err(Error::Parameter(format!(
            "reference cluster {reference} out of range 1..{}",
            rep.k
        )));
    }
    if excluded.contains(&reference) {
        return Err(Error::Parameter(format!(
            "reference cluster {reference} was excluded by the size filter"
        )));
    }
    let mut contrasts = cluster_effect_contrasts(&gamma, reference - 1, cfg.post.contrast_level)?;
    for row in &mut contrasts.rows {
        if excluded.contains(&(row.cluster + 1)) {
            row.coords.clear();
        }
    }

    let mut gamma_report = gamma.clone();
    for cluster in &mut gamma_report.clusters {
        if excluded.contains(&(cluster.cluster + 1)) {
            cluster.present = false;
            cluster.coords.clear();
        }
    }

    let summary = SummaryFile {
        kept_draws: chain.kept(),
        subset_size: subset.len(),
        k: rep.k,
        selection,
        cluster_sizes: rep.sizes.clone(),
        excluded_clusters: excluded,
        min_cluster_size,
        credible_level: level,
        contrast_level: cfg.post.contrast_level,
        reference_cluster: reference,
        fixed_effects: fixed_effect_rows(&chain, &views, level),
        cluster_effects: gamma_report,
        cluster_locations: mu,
        cluster_covariances: sigma,
        cluster_cat_probs: phi,
        contrasts,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_effects_csv(
        &out.join("cluster_effects.csv"),
        &summary.cluster_effects,
        &views.int.names,
    )?;
    write_contrasts_csv(
        &out.join("cluster_contrasts.csv"),
        &summary.contrasts,
        &views.int.names,
    )?;
    let fe_rows = &summary.fixed_effects;
    {
        let mut w = BufWriter::new(File::create(out.join("fixed_effects.csv"))?);
        writeln!(w, "name,mean,lower,upper")?;
        for row in fe_rows {
            writeln!(w, "{},{},{},{}", row.name, row.mean, row.lower, row.upper)?;
        }
        w.flush()?;
    }
    fs::write(
        out.join("tables.txt"),
        human_tables(&summary, &views.int.names),
    )?;
    Ok(())
}
