//! Bayesian profile regression with a linear mixed model outcome.
//!
//! The model jointly clusters a block of correlated covariates with a
//! truncated Dirichlet-process Gaussian/multinomial mixture and regresses a
//! continuous longitudinal outcome on fixed effects, individual random
//! effects, and cluster-specific interaction effects. Inference runs on a
//! blocked Gibbs sampler in which every conditional is an exact conjugate
//! draw.
//!
//! Crate layout:
//! - [`stochastics`]: seedable random streams, PSD matrix checks, and the
//!   variate primitives used by every sampler block.
//! - [`model`]: datasets, model specification, hyperparameters, sampler
//!   state, and chain storage/persistence.
//! - [`conditionals`]: the conditional-posterior updates of the sampler.
//! - [`engine`]: the Gibbs loop, trace diagnostics, and the joint-distribution
//!   sampler-validation harness.
//! - [`postprocess`]: similarity matrices, PAM consensus clustering, and
//!   label-switching-robust parameter summaries.
//! - [`simulation`]: scenario generators, benchmark baselines, clustering
//!   metrics, and the replication study driver.

pub mod conditionals;
pub mod engine;
pub mod error;
pub mod model;
pub mod postprocess;
pub mod simulation;
pub mod stochastics;

pub use error::{Error, Result};
