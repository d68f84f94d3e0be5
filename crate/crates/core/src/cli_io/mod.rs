//! Configuration files, CSV/JSON artifacts, single runs and sweeps.

pub mod config;
pub mod experiment;
pub mod io;
pub mod sweep;

pub use config::{parse_config, ExperimentConfig, Generator};
pub use experiment::{
    run_diagnostics, run_experiment, DiagnosticsSummary, RunOutput, RunReport, Timing,
};
pub use io::{read_coeff, read_field, write_coeff, write_field};
pub use sweep::{expand, parse_variation, run_sweep, Variation};
