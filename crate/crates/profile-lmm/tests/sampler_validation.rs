//! Joint-distribution validation of the Gibbs sampler on a toy model, with
//! a deliberately corrupted negative control.

use profile_lmm::engine::{getting_it_right, Fault, GewekeConfig};

fn print_report(tag: &str, report: &profile_lmm::engine::GewekeReport) {
    eprintln!(
        "{tag}: {} draws, max |z| = {:.2}, passed = {}",
        report.n_draws, report.max_abs_z, report.passed
    );
    for s in &report.stats {
        eprintln!(
            "  {:>22}: marginal {:>9.4}  successive {:>9.4}  z = {:>7.2}",
            s.name, s.marginal_mean, s.successive_mean, s.z
        );
    }
}

#[test]
fn getting_it_right_passes_on_toy_model() {
    let cfg = GewekeConfig {
        n_obs: 30,
        m: 10,
        c_max: 4,
        n_draws: 20_000,
        seed: 2024,
        fault: None,
    };
    let report = getting_it_right(&cfg).unwrap();
    print_report("clean sampler", &report);
    assert!(report.stats.len() >= 10);
    assert!(
        report.passed,
        "joint-distribution check failed: max |z| = {}",
        report.max_abs_z
    );
}

#[test]
fn corrupted_sigma_update_is_detected() {
    let cfg = GewekeConfig {
        n_obs: 30,
        m: 10,
        c_max: 4,
        n_draws: 20_000,
        seed: 2024,
        fault: Some(Fault::SigmaRateHalved),
    };
    let report = getting_it_right(&cfg).unwrap();
    print_report("corrupted sigma", &report);
    assert!(
        !report.passed,
        "negative control went undetected: max |z| = {}",
        report.max_abs_z
    );
}
