//! Declarative experiment harness for effective counterdiabatic driving.

pub mod config;
pub mod error;
pub mod experiments;
pub mod results;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::LabError;
pub use experiments::{run, run_with_threads};
pub use results::{write_results, ResultSet, Row, Series};
