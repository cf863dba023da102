//! Scenario generation, benchmark baselines, evaluation metrics, and the
//! replication study driver.

pub mod bspline;
pub mod metrics;
pub mod scenario;
pub mod study;

pub use bspline::bspline_basis;
pub use metrics::{adjusted_rand_index, purity, relative_rmse};
pub use scenario::{
    benchmark_true_assignment, benchmark_true_centroids, generate_scenario, grid_centroids,
    GroundTruth, Scenario, ScenarioConfig, TRUE_BETA, TRUE_GAMMA_INTERCEPTS, TRUE_GAMMA_SLOPES,
};
pub use study::{
    run_replication_study, MetricSummary, StudyConfig, StudyReport, StudyRow,
    BETA_INTERACTING, BETA_NON_INTERACTING, METHOD_PROFILE_LMM, METHOD_TRUE_ASSIGNMENT,
    METHOD_TRUE_CENTROIDS,
};
