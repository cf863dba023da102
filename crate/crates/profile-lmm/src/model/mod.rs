//! Data model: datasets, specification, hyperparameters, sampler state, and
//! chain storage.

pub mod chain;
pub mod data;
pub mod design;
pub mod spec;
pub mod state;
pub mod store;

pub use chain::{ChainDims, ChainMeta, ChainStore};
pub use data::{CategoricalColumn, LongitudinalDataset};
pub use design::{build_design_views, rows_by_cluster, BlockDesign, DesignViews};
pub use spec::{Hyperparameters, ModelSpec, SplineSpec};
pub use state::{
    init_state, init_state_with_views, stick_to_weights, uniform_sticks, ClusterAssignParams,
    ParameterState,
};
pub use store::{fingerprint, load_chain, save_chain};
