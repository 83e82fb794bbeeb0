//! Experiment harness for the sequential MED classifiers: synthetic and
//! file-backed streams, the sequential model against per-batch and
//! full-retrain baselines, CSV tables and SVG accuracy curves.

pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;

pub use config::{Baseline, ExperimentConfig, KernelKind, ModelKind, Scenario};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, summarize, ResultRow, ResultsTable, SummaryRow};
pub use plot::{emit_plot, render_svg};
