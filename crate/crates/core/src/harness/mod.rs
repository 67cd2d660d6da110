//! Experiment configs, presets, CSV output, rate probes and benchmarks.

pub mod bench;
pub mod config;
pub mod experiment;
pub mod presets;
pub mod rate_probe;

pub use config::{ExperimentConfig, NetworkSpec, ProblemSpec, Resolved, RunOverrides};
pub use experiment::{run_experiment, ExperimentSummary, RunRecord};
pub use presets::{preset, PRESETS};
pub use rate_probe::{rate_probe, EtaRule, RateRow, RateTable};
