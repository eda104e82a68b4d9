//! Declarative scenario runner for the `entroflow` library.
//!
//! A scenario document names an experiment, a grid, a time window, a prior
//! diffusion and the densities involved. [`run_scenario`] produces a time
//! series and a list of pass/fail verdicts, each graded against a tolerance
//! exported by the library module that owns the formula.

pub mod config;
pub mod error;
pub mod oracles;
pub mod output;
pub mod run;

pub use config::{load_scenario, parse_scenario, Format, Kind, Scenario};
pub use error::{CliError, FieldError};
pub use output::write_outputs;
pub use run::{run_scenario, Report, SeriesRecord, Verdict};
