//! Exploratory desk-scale recovery run (temporary).

use profile_lmm::engine::{run_chain, RunConfig};
use profile_lmm::model::{build_design_views, Hyperparameters};
use profile_lmm::postprocess::{
    aggregate_cluster_params, build_similarity, representative_clustering, ParamKind,
};
use profile_lmm::simulation::{
    adjusted_rand_index, benchmark_true_centroids, generate_scenario, purity, ScenarioConfig,
    METHOD_PROFILE_LMM,
};

#[test]
#[ignore]
fn desk_scale_recovery_probe() {
    let t0 = std::time::Instant::now();
    let cfg = ScenarioConfig {
        individuals: 300,
        seed: 4242,
        ..ScenarioConfig::default()
    };
    let (data, truth) = generate_scenario(&cfg).unwrap();
    let spec = cfg.fit_model_spec(30, true);
    let views = build_design_views(&data, &spec).unwrap();
    let hyper = Hyperparameters::default_for(views.re.ncols(), views.int.ncols(), views.q_cont());
    let runcfg = RunConfig {
        iterations: 3000,
        burn_in: 1000,
        thin: 1,
        seed: 99,
        n_chains: 1,
        record_loglik: false,
    };
    let chain = run_chain(&data, &spec, &hyper, &runcfg).unwrap();
    eprintln!("fit took {:?}", t0.elapsed());
    let nclus_tail: Vec<usize> = chain.trace_nclus.iter().rev().take(20).copied().collect();
    eprintln!("non-empty clusters (last 20 kept): {nclus_tail:?}");

    let ids: Vec<usize> = (0..data.n()).collect();
    let sim = build_similarity(&chain, &ids).unwrap();
    eprintln!("similarity built at {:?}", t0.elapsed());
    let rep = representative_clustering(&sim, None, 15).unwrap();
    eprintln!("k* = {}, sizes = {:?} at {:?}", rep.k, rep.sizes, t0.elapsed());
    let ari = adjusted_rand_index(&rep.labels, &truth.labels).unwrap();
    let pur = purity(&rep.labels, &truth.labels).unwrap();
    let tc = benchmark_true_centroids(&data, &truth).unwrap();
    let ari_tc = adjusted_rand_index(&tc, &truth.labels).unwrap();
    eprintln!("profile ARI = {ari:.4}, purity = {pur:.4}; true-centroid ARI = {ari_tc:.4}");

    let summary = aggregate_cluster_params(&chain, &rep, ParamKind::Gamma, 0.9, None).unwrap();
    // Map representative clusters to true clusters via medoid truth labels.
    for c in 0..rep.k {
        let medoid_truth = truth.labels[rep.medoid_ids[c]];
        let est = &summary.clusters[c];
        if est.present {
            eprintln!(
                "cluster {c} (n={}): gamma* = ({:+.3}, {:+.3}); truth[{}] = ({:+.2}, {:+.2})",
                est.n_obs,
                est.coords[0].mean,
                est.coords[1].mean,
                medoid_truth,
                truth.gamma[medoid_truth][0],
                truth.gamma[medoid_truth][1],
            );
        }
    }
    eprintln!("total {:?} ({METHOD_PROFILE_LMM})", t0.elapsed());
}
