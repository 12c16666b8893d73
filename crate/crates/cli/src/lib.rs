//! Experiment harness around `radiomx-core`: cohort split, feature tables,
//! the per-task, per-modality main experiment and the spacing sweep.
//!
//! Every stage is reachable from the `radiomx` binary and from Rust; the
//! stage commands in [`pipeline`] compose to the same files as `run`.

pub mod config;
pub mod data;
pub mod pipeline;
pub mod report;
pub mod split;
pub mod sweep;
pub mod table;

pub use config::ExperimentConfig;
pub use report::ComparisonReport;
