//! Chain persistence: lossless round trips, byte-identical re-runs, and
//! resume-from-disk continuation.

use std::fs;

use profile_lmm::engine::{run_chain, run_chain_with_options, ChainOptions, RunConfig};
use profile_lmm::model::{load_chain, save_chain, Hyperparameters, ModelSpec};
use profile_lmm::simulation::{generate_scenario, ScenarioConfig};

fn setup() -> (
    profile_lmm::model::LongitudinalDataset,
    ModelSpec,
    Hyperparameters,
    RunConfig,
) {
    let cfg = ScenarioConfig {
        individuals: 20,
        ..ScenarioConfig::default()
    };
    let (data, _) = generate_scenario(&cfg).unwrap();
    let spec = cfg.fit_model_spec(6, true);
    let hyper = Hyperparameters::default_for(cfg.re_n_basis, 2, 2);
    let runcfg = RunConfig {
        iterations: 12,
        burn_in: 4,
        thin: 2,
        seed: 77,
        n_chains: 1,
        record_loglik: true,
    };
    (data, spec, hyper, runcfg)
}

#[test]
fn chain_round_trips_losslessly() {
    let (data, spec, hyper, runcfg) = setup();
    let chain = run_chain(&data, &spec, &hyper, &runcfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_chain(&chain, dir.path()).unwrap();
    let loaded = load_chain(dir.path()).unwrap();
    assert_eq!(chain, loaded);
}

#[test]
fn identical_seeds_write_identical_bytes() {
    let (data, spec, hyper, runcfg) = setup();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let chain_a = run_chain(&data, &spec, &hyper, &runcfg).unwrap();
    let chain_b = run_chain(&data, &spec, &hyper, &runcfg).unwrap();
    save_chain(&chain_a, dir_a.path()).unwrap();
    save_chain(&chain_b, dir_b.path()).unwrap();
    let mut names: Vec<String> = fs::read_dir(dir_a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"meta".to_string()));
    assert!(names.contains(&"alloc".to_string()));
    for name in names {
        let a = fs::read(dir_a.path().join(&name)).unwrap();
        let b = fs::read(dir_b.path().join(&name)).unwrap();
        assert_eq!(a, b, "file {name} differs");
    }
}

#[test]
fn resume_from_disk_matches_uninterrupted_run() {
    let (data, spec, hyper, mut runcfg) = setup();
    runcfg.thin = 1;
    let head = run_chain(&data, &spec, &hyper, &runcfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_chain(&head, dir.path()).unwrap();
    let reloaded = load_chain(dir.path()).unwrap();

    let mut full_cfg = runcfg.clone();
    full_cfg.iterations = 20;
    let resumed = run_chain_with_options(
        &data,
        &spec,
        &hyper,
        &full_cfg,
        ChainOptions {
            resume: Some(&reloaded),
            ..ChainOptions::default()
        },
    )
    .unwrap();
    let full = run_chain(&data, &spec, &hyper, &full_cfg).unwrap();
    assert_eq!(resumed, full);
}

#[test]
fn corrupted_files_are_rejected() {
    let (data, spec, hyper, runcfg) = setup();
    let chain = run_chain(&data, &spec, &hyper, &runcfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_chain(&chain, dir.path()).unwrap();
    // Truncate one tensor payload.
    let beta = dir.path().join("beta");
    let bytes = fs::read(&beta).unwrap();
    fs::write(&beta, &bytes[..bytes.len() - 4]).unwrap();
    assert!(load_chain(dir.path()).is_err());
    // Bad magic.
    fs::write(dir.path().join("beta"), b"XXXXrest").unwrap();
    assert!(load_chain(dir.path()).is_err());
}

#[test]
fn parameter_state_json_round_trip() {
    let (data, spec, hyper, runcfg) = setup();
    let chain = run_chain(&data, &spec, &hyper, &runcfg).unwrap();
    let state = &chain.draws[0];
    let json = serde_json::to_string(state).unwrap();
    let back: profile_lmm::model::ParameterState = serde_json::from_str(&json).unwrap();
    assert_eq!(state, &back);
}
