//! Batch runner for centro-affine flow experiments: seed bodies, run
//! configuration, snapshot files, time-series tables and audit reports.

pub mod audit;
pub mod config;
pub mod run;
pub mod seed;
pub mod snapshot;

pub use config::{Horizon, RunConfig, SlackPolicy};
pub use run::{run, RunOutcome};
pub use seed::SeedSpec;
pub use snapshot::{load_body, save_body};
