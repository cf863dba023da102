//! `fit`: run the sampler on a CSV dataset and persist chains plus
//! diagnostics.

use std::fs;
use std::path::Path;

use profile_lmm::engine::{diagnostics, run_chain_with_options, ChainOptions};
use profile_lmm::model::save_chain;
use profile_lmm::Error;

use crate::commands::{ensure_dir, write_json};
use crate::config::{emit_effective_config, ParsedConfig};
use crate::ingest::IngestedData;

pub fn run(cfg: &ParsedConfig, data: &IngestedData, out: &Path, quiet: bool) -> Result<(), Error> {
    ensure_dir(out)?;
    fs::write(out.join("config.effective"), emit_effective_config(cfg))?;


    let mut reports = Vec::new();
    for stream in 0..cfg.run.n_chains as u64 {
        let progress: Option<Box<dyn FnMut(profile_lmm::engine::ProgressEvent) + Send>> =
            if quiet {
                None
            } else {
                Some(Box::new(move |e: profile_lmm::engine::ProgressEvent| {
                    println!(
                        "chain {stream}: iteration {}/{}  non-empty clusters {}  zeta {:.3}",
                        e.iteration, e.iterations, e.non_empty_clusters, e.zeta
                    );
                }))
            };
        let chain = run_chain_with_options(
            &data.dataset,
            &cfg.spec,
            &cfg.hyper,
            &cfg.run,
            ChainOptions {
                stream_id: stream,
                progress,
                ..ChainOptions::default()
            },
        )?;
        let dir = if cfg.run.n_chains == 1 {
            out.join("chain")
        } else {
            out.join(format!("chain_{stream:02}"))
        };
        save_chain(&chain, &dir)?;
        reports.push(diagnostics(&chain)?);

    }
    write_json(&out.join("diagnostics.json"), &reports)?;

    let mut text = String::new();
    for (k, report) in reports.iter().enumerate() {
        text.push_str(&format!(
            "chain {k}: kept {} draws\n  zeta: mean {:.4}, sd {:.4}, lag1 {:.3}, ESS {:.0}\n  \
             non-empty clusters: mean {:.2}, sd {:.2}, lag1 {:.3}, ESS {:.0}\n  \
             sigma2: mean {:.4}, sd {:.4}, lag1 {:.3}, ESS {:.0}\n",
            report.kept,
            report.zeta.mean,
            report.zeta.sd,
            report.zeta.lag1_autocorr,
            report.zeta.ess,
            report.non_empty_clusters.mean,
            report.non_empty_clusters.sd,
            report.non_empty_clusters.lag1_autocorr,
            report.non_empty_clusters.ess,
            report.sigma2.mean,
            report.sigma2.sd,
            report.sigma2.lag1_autocorr,
            report.sigma2.ess,
        ));
    }
    fs::write(out.join("diagnostics.txt"), text)?;

    Ok(())
}
