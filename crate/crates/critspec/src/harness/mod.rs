//! Experiment harness: configuration, dataset ingestion, the training
//! driver, and metric summaries.

mod config;
mod dataset;
mod experiment;
mod summary;

pub use config::{DatasetSpec, ExperimentConfig, OptimizerConfig};
pub use dataset::{load_dataset, Dataset};
pub use experiment::{
    build_network, prepare_data, run_experiment, write_record_csv, BoundComparison, EpochRow,
    PreparedData, RunRecord, CSV_HEADER,
};
pub use summary::{summarize, write_summary_files, EpochAggregate, Summary};
