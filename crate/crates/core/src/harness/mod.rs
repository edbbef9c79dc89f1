//! Experiment harness: TOML configuration, excitation generation, truth
//! simulation and the run pipeline behind the command-line verbs.

pub mod config;
mod excitation;
mod experiment;
mod io;
mod simulate;

pub use config::{Config, Scenario, SCHEMA_VERSION};
pub use excitation::{generate_excitation, generate_excitations, matern_sample, read_record, resample};
pub use experiment::{hyper_template, model_diagnostics, run_config, run_experiment, Bundle, ModelDiagnostics, Verb};
pub use io::{format_value, json_pretty, read_series_csv, series_csv, table_csv};
pub use simulate::{propagate, simulate_response, Simulation, Truth};
