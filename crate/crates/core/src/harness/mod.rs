//! Experiment orchestration, file formats and report assembly.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod ranking;
pub mod report;
pub mod serde_f64;
pub mod split;

pub use config::{ExperimentConfig, Regime};
pub use dataset::{export_dataset, import_dataset};
pub use experiment::{ranking_consistency, run_experiment, run_experiment_on, MetricReport};
pub use ranking::{rank_agreement, Ranking};
pub use report::{read_report, write_report};
pub use split::{stratified_split, Split};
