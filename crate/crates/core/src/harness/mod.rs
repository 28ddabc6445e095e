//! Monte-Carlo evaluation: configuration, single trials, campaigns and CSV
//! output.

pub mod campaign;
pub mod config;
pub mod output;
pub mod trial;

use std::path::PathBuf;

use thiserror::Error;

use crate::filter::FilterError;
use crate::simworld::SimError;

pub use campaign::{run_monte_carlo, CampaignSummary};
pub use config::{InitErrorModel, SimConfig, TerrainKind, VelocityModel, KEYS};
pub use output::{emit_results, read_trial_csv, SUMMARY_HEADER, TRIAL_HEADER};
pub use trial::{run_trial, stream_rng, SeriesRow, TrialConfig, TrialOptions, TrialResult, World};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}
