//! Command-line front end for the topoflock toolkit: TOML run configurations
//! checked against a scenario registry, a dispatching runner, and stable
//! CSV/JSON artifact writers.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{component_seed, emit_config, parse_config, Model, RunConfig, REGISTRY};
pub use runner::{execute, run_simulation, write_outputs};
