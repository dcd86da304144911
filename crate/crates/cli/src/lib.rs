//! Scenario-driven batch runs of the pointcause engine.

pub mod config;
pub mod error;
pub mod ingest;
pub mod run;

pub use config::{Mode, Profile, ScenarioConfig};
pub use error::CliError;
pub use ingest::{ingest_patterns, DataQuality, Ingested};
pub use run::{run, RunOptions, RunSummary};
