//! `validate`: run the joint-distribution sampler checks (clean pass plus
//! fault-injected negative control) and fail loudly when either misbehaves.

use std::path::Path;

use profile_lmm::engine::{getting_it_right, Fault, GewekeConfig, GewekeReport};
use profile_lmm::Error;

use crate::commands::{ensure_dir, write_json};

fn print_report(tag: &str, report: &GewekeReport) {
    println!(
        "{tag}: {} draws per simulator, max |z| = {:.2}, passed = {}",
        report.n_draws, report.max_abs_z, report.passed
    );
    for s in &report.stats {
        println!(
            "  {:>22}: marginal {:>10.4}  successive {:>10.4}  z = {:>7.2}",
            s.name, s.marginal_mean, s.successive_mean, s.z
        );
    }
}

pub fn run(n_draws: usize, seed: u64, out: Option<&Path>) -> Result<(), Error> {
    let clean_cfg = GewekeConfig {
        n_draws,
        seed,
        ..GewekeConfig::default()
    };
    let clean = getting_it_right(&clean_cfg)?;
    print_report("clean sampler", &clean);
    let corrupted_cfg = GewekeConfig {
        fault: Some(Fault::SigmaRateHalved),
        ..clean_cfg
    };
    let corrupted = getting_it_right(&corrupted_cfg)?;
    print_report("negative control (sigma rate halved)", &corrupted);

    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("validate.json"), &(&clean, &corrupted))?;
    }
    if !clean.passed {
        return Err(Error::Numerical(format!(
            "sampler validation failed: max |z| = {:.2}",
            clean.max_abs_z
        )));
    }
    if corrupted.passed {
        return Err(Error::Numerical(
            "negative control passed: the harness failed to detect a corrupted update".into(),
        ));
    }
    println!("validation passed: clean sampler within |z| < 4, corrupted update detected");
    Ok(())
}
