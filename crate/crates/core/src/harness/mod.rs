//! Experiment plumbing: synthetic datasets, point-set and activation-dump
//! files, training runs with persisted records, and run comparison.

mod data;
mod experiment;
mod io;
mod report;

pub use data::{generate_dataset, generate_points, DatasetKind, DatasetSpec, PointDistribution};
pub use experiment::{
    capture_activations, run_experiment, run_experiment_with, run_sweep, train_run, EpochRecord, ExperimentConfig, InitialEval, NetworkConfig, RunRecord,
};
pub use io::{
    format_points, parse_activation_dump, parse_points, read_points, write_atomic, write_dataset,
    ActivationDump,
};
pub use report::{compare_runs, profile_dump, FINAL_EPOCH_WINDOW, ComparisonReport, ProfileReport, RunSummary, SummaryDelta};
