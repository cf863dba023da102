//! Batch front end: fit, postprocess, simulate, study, and validate.

mod commands;
mod config;
mod ingest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use profile_lmm::engine::RunConfig;
use profile_lmm::simulation::{Scenario, ScenarioConfig, StudyConfig};
use profile_lmm::Error;

use crate::config::ParsedConfig;

#[derive(Parser)]
#[command(
    name = "profile-lmm",
    about = "Joint Dirichlet-process clustering of correlated covariates with a linear mixed model outcome",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFitArgs {
    /// Configuration file (key = value sections [model] [priors] [run]).
    #[arg(long)]
    config: PathBuf,
    /// Input dataset CSV (columns: id, time, y, covariates).
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Truncation level C.
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    similarity_subset: Option<usize>,
    #[arg(long)]
    credible_level: Option<f64>,
}

impl CommonFitArgs {
    fn apply(&self, cfg: &mut ParsedConfig) -> Result<(), Error> {
        if let Some(v) = self.iterations {
            cfg.run.iterations = v;
        }
        if let Some(v) = self.burn_in {
            cfg.run.burn_in = v;
        }
        if let Some(v) = self.thin {
            cfg.run.thin = v;
        }
        if let Some(v) = self.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = self.truncation {
            cfg.spec.c_max = v;
        }
        if let Some(v) = self.similarity_subset {
            cfg.post.similarity_subset = v;
        }
        if let Some(v) = self.credible_level {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Parameter(format!(
                    "credible level {v} must lie in [0, 1)"
                )));
            }
            cfg.post.credible_level = v;
        }
        cfg.run.validate()?;
        cfg.spec.validate(1 + cfg.x_names.len())?;
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a CSV dataset and persist chains plus diagnostics.
    Fit {
        #[command(flatten)]
        common: CommonFitArgs,
        /// Suppress progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Post-process a stored chain: similarity, consensus clustering,
    /// cluster summaries, and contrasts.
    Postprocess {
        #[command(flatten)]
        common: CommonFitArgs,
        /// Chain directory (defaults to <out>/chain from a previous fit).
        #[arg(long)]
        chain: Option<PathBuf>,
        /// Fixed cluster count for PAM (selected by silhouette if absent).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        contrast_level: Option<f64>,
        /// 1-based reference cluster for contrasts.
        #[arg(long)]
        reference: Option<usize>,
        #[arg(long)]
        min_cluster_frac: Option<f64>,
    },
    /// Generate a synthetic dataset with ground truth.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Scenario 1 (separated) or 2 (correlated, sparse quadrants).
        #[arg(long, default_value_t = 1)]
        scenario: u8,
        #[arg(long, default_value_t = 1000)]
        individuals: usize,
        #[arg(long, default_value_t = 3)]
        waves: usize,
        #[arg(long, default_value_t = 7002405)]
        seed: u64,
        #[arg(long)]
        within_sd: Option<f64>,
        #[arg(long)]
        correlation: Option<f64>,
        #[arg(long)]
        sparse_factor: Option<f64>,
    },
    /// Replication study with benchmark baselines.
    Study {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        scenario: u8,
        #[arg(long, default_value_t = 25)]
        reps: usize,
        #[arg(long, default_value_t = 300)]
        individuals: usize,
        #[arg(long, default_value_t = 3)]
        waves: usize,
        #[arg(long, default_value_t = 3000)]
        iterations: usize,
        #[arg(long, default_value_t = 1000)]
        burn_in: usize,
        #[arg(long, default_value_t = 30)]
        truncation: usize,
        #[arg(long, default_value_t = 31415)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        subset_size: usize,
        #[arg(long, default_value_t = 15)]
        k_max: usize,
    },
    /// Sampler-correctness suite (joint-distribution test plus negative
    /// control); exits nonzero on failure.
    Validate {
        #[arg(long, default_value_t = 20000)]
        draws: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn scenario_config(
    scenario: u8,
    individuals: usize,
    waves: usize,
    seed: u64,
    within_sd: Option<f64>,
    correlation: Option<f64>,
    sparse_factor: Option<f64>,
) -> Result<ScenarioConfig, Error> {
    let scenario = match scenario {
        1 => Scenario::One,
        2 => Scenario::Two,
        other => {
            return Err(Error::Parameter(format!(
                "scenario must be 1 or 2, got {other}"
            )))
        }
    };
    let mut cfg = ScenarioConfig {
        individuals,
        waves,
        scenario,
        seed,
        ..ScenarioConfig::default()
    };
    if let Some(v) = within_sd {
        cfg.within_sd = v;
    }
    if let Some(v) = correlation {
        cfg.within_correlation = v;
    }
    if let Some(v) = sparse_factor {
        cfg.sparse_weight_factor = v;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Fit { common, quiet } => {
            let mut cfg = config::parse_config(&common.config)?;
            common.apply(&mut cfg)?;
            let data = ingest::ingest_csv(&common.data, &cfg)?;
            commands::fit::run(&cfg, &data, &common.out, quiet)?;
            println!("fit artifacts written to {}", common.out.display());
            Ok(())
        }
        Command::Postprocess {
            common,
            chain,
            k,
            k_max,
            contrast_level,
            reference,
            min_cluster_frac,
        } => {
            let mut cfg = config::parse_config(&common.config)?;
            common.apply(&mut cfg)?;
            if let Some(v) = k {
                cfg.post.k = v;
            }
            if let Some(v) = k_max {
                cfg.post.k_max = v;
            }
            if let Some(v) = contrast_level {
                cfg.post.contrast_level = v;
            }
            if let Some(v) = reference {
                cfg.post.reference_cluster = v;
            }
            if let Some(v) = min_cluster_frac {
                cfg.post.min_cluster_frac = v;
            }
            let data = ingest::ingest_csv(&common.data, &cfg)?;
            let chain_dir = chain.unwrap_or_else(|| common.out.join("chain"));
            commands::postprocess::run(&cfg, &data, &chain_dir, &common.out)?;
            println!(
                "post-processing artifacts written to {}",
                common.out.display()
            );
            Ok(())
        }
        Command::Simulate {
            out,
            scenario,
            individuals,
            waves,
            seed,
            within_sd,
            correlation,
            sparse_factor,
        } => {
            let cfg = scenario_config(
                scenario,
                individuals,
                waves,
                seed,
                within_sd,
                correlation,
                sparse_factor,
            )?;
            commands::simulate::run(&cfg, &out)
        }
        Command::Study {
            out,
            scenario,
            reps,
            individuals,
            waves,
            iterations,
            burn_in,
            truncation,
            seed,
            subset_size,
            k_max,
        } => {
            let scenario = scenario_config(scenario, individuals, waves, seed, None, None, None)?;
            let cfg = StudyConfig {
                scenario,
                n_reps: reps,
                c_max: truncation,
                run: RunConfig {
                    iterations,
                    burn_in,
                    thin: 1,
                    seed,
                    n_chains: 1,
                    record_loglik: false,
                },
                subset_size,
                k_max,
                master_seed: seed,
            };
            commands::study::run(&cfg, &out)
        }
        Command::Validate { draws, seed, out } => {
            commands::validate::run(draws, seed, out.as_deref())
        }
    }
}

/// Exit codes: 0 success, 1 usage/config, 2 data, 3 numerical.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Spec(_) | Error::Parameter(_) | Error::Format(_) | Error::Io(_) => 1,
        Error::Data(_) => 2,
        Error::NotPositiveDefinite { .. } | Error::Numerical(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = serde_json::json!({
                "error": err.to_string(),
                "exit_code": exit_code(&err),
            });
            eprintln!("{record}");
            ExitCode::from(exit_code(&err))
        }
    }
}
