//! Reproduction runs, settings and file output behind the `mtikh` command.

pub mod reproduce;
pub mod settings;
pub mod svg;

pub use reproduce::{reproduce, ExperimentConfig, Preset, Report, TableRow};
pub use settings::Settings;
