//! File formats, SVG output and the `msm` command line on top of
//! `msm-core`.
//!
//! Commands:
//!
//! - `extract-keys`: `report.csv` and `elbow.svg`.
//! - `fit`: one chain file per chain, `rhat.csv` for several chains.
//! - `summarize`: `summary.csv`, `diff_kappa.csv`, `diff_gamma.csv`,
//!   `tau_by_group.csv` and SVG boxplots.
//! - `simulate`: `events.csv`, `covariates.csv`, `labels.csv`, `truth.json`.
//!
//! Every command writes a `manifest.json` into its output directory.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod svg;

pub use crate::cli::main_with_args;
pub use crate::error::CliError;
