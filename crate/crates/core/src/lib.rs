//! Win ratio estimation for a censored terminal event followed by a second
//! endpoint that is observed only for subjects event-free at a fixed horizon.
//!
//! The main estimator folds both endpoints into one right-censored score
//! `S = Y1 + 1{Y1 > h} * Y2` and plugs per-arm Kaplan–Meier fits into the
//! win and loss probabilities. Variance comes from a closed-form influence
//! function or the bootstrap.

pub mod cli;
pub mod covadjust;
pub mod data;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod sim;
pub mod survfit;

pub use data::{AnalysisDataset, Arm, ScoreObservation, StudyConfig, SubjectRecord};
pub use error::{Result, WrError};
pub use estimators::{Method, WrEstimate};
