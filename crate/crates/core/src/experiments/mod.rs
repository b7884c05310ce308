//! Supervised experiment suite: dataset generators, canonical model
//! architectures, and the four measurement protocols (capacity sweep,
//! sequential tasks, interpretor PCA, spaced repetition).
//!
//! Each protocol function runs one `(model, seed)` cell; fanning out over
//! seeds and writing artifacts is the runner's job. All randomness flows
//! through explicitly passed [`crate::rng::RngStream`]s, so any cell can
//! be reproduced bitwise in isolation.

pub mod capacity;
pub mod data;
pub mod interpretors;
pub mod models;
pub mod repetition;
pub mod sequential;

pub use capacity::{
    capacity_curves_csv, capacity_summary_csv, run_capacity, run_capacity_sweep, CapacityRun,
};
pub use data::{
    gen_classification, gen_continual_tasks, gen_regression, ClassificationSuite, ContinualTask,
    ContinualTaskSuite, RegressionDataset,
};
pub use interpretors::{pca_embedding_csv, pca_interpretors, pca_summary_csv, PcaOutcome};
pub use models::{
    actor_config, canonical_architectures, capacity_config, capacity_config_dims,
    classification_config, critic_config, q_network_config, sequential_config, ModelKind,
};
pub use repetition::{
    repetition_curves_csv, repetition_summary_csv, run_spaced_repetition, RepetitionConfig,
    RepetitionOutcome,
};
pub use sequential::{
    run_sequential_tasks, sequential_detail_csv, sequential_summary_csv, SequentialOutcome,
};
