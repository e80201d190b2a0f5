//! End-to-end experiment: load, split, tune and compare learners, stack,
//! report. Every output is assembled in memory as text keyed by relative path,
//! then written in path order, so two runs with the same config and seed
//! produce byte-identical directories.

mod artifacts;
mod config;
mod document;
mod run;

use std::fmt::Display;

use thiserror::Error;

pub use artifacts::{header_lines, write_artifacts, Artifacts};
pub use config::{
    default_importance_learner, default_meta_candidates, default_roster, PipelineConfig, RosterEntry, SearchConfig,
    SplitConfig, StackConfig, TargetConfig,
};
pub use document::{DocumentModel, ModelDocument, Prediction, MODEL_DOCUMENT_VERSION};
pub use run::{
    evaluate_external, importance_table, load_and_encode, plan_split, run, tune_learner, Experiment, LearnerOutcome,
    RunOutput,
};

/// A failure tagged with the pipeline stage that produced it.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &'static str, err: impl Display) -> Self {
        Self {
            stage,
            message: err.to_string(),
        }
    }
}
