//! Experiment harness: configuration, paired trials, sweeps and artifacts.

pub mod config;
pub mod output;
pub mod sweep;
pub mod trial;

pub use config::{ControlMode, InitialAgents, InitialDensity, Legs, TrialConfig};
pub use output::{write_timeseries, write_trial_outputs};
pub use sweep::{sweep, write_sweep_outputs, SweepOutcome, SweepRow};
pub use trial::{percentage_error, run_trial, LegSeries, TrialResult};
