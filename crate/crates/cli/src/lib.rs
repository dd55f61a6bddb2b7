//! Configuration, data loading, experiment dispatch and report files for
//! the `gluekit` command-line tool.

pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod npy;
pub mod report;

pub use config::{load_config, ExperimentConfig, Kind};
pub use data::{load_activations, Format};
pub use error::{CliError, CliResult};
pub use experiments::run_experiment;
pub use report::{emit_reports, ReportBundle, Table};
