//! Datasets, the lower-bound stream, experiment orchestration and the
//! prefix-error oracle.

pub mod datasets;
pub mod experiment;
pub mod lowerbound;
pub mod verify;

pub use datasets::{Component, Dataset, DatasetSpec};
pub use experiment::{run_experiment, Algo, ExperimentConfig, ResultRow};
pub use lowerbound::{gen_lowerbound_stream, LowerBoundSpec};
pub use verify::{measure_online_coreset_error, ErrorReport};
