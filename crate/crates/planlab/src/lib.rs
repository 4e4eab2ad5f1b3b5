//! Experiment harness: configuration, orchestration, aggregation and
//! significance testing on top of `planlab-core`.

pub mod bounds_grid;
pub mod checks;
pub mod config;
pub mod error;
pub mod experiment;
pub mod stats;

pub use checks::{check_properties, CheckResult};
pub use config::{ExperimentConfig, ExperimentKind, FrameworkEntry, MapSource};
pub use error::HarnessError;
pub use experiment::{run_experiment, ExperimentOutput};
pub use stats::{compare_cells, CellKey, CellSummary, Comparison, ResultTable, Verdict};
