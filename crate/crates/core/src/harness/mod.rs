//! Experiment orchestration: configuration, resumable stages and reports.

pub mod config;
pub mod output;
pub mod stages;

pub use config::ExperimentConfig;
pub use stages::{
    cmd_attribute, cmd_concepts, cmd_evaluate, cmd_prune, cmd_report, cmd_run_all, cmd_train, Layout,
    ResultsBundle, StageOutcome,
};
