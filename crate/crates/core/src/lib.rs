//! Key-action extraction and multi-state survival modeling for timestamped
//! action-sequence logs.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, plotting and
//! the command-line front end live in the `msm` crate.
//!
//! Pipeline:
//!
//! 1. [`data`]: build a validated [`Dataset`] from event rows, covariates and
//!    correctness labels, and expand it into sojourns and transitions.
//! 2. [`keyactions`]: ISF/TF weighting, weighted chi-square scores, the
//!    group-ratio filter and the elbow cutoff.
//! 3. [`hazard`]: the transition hazard, exact sojourn integrals and the
//!    log-likelihood (plus analytic gradients and cached block deltas).
//! 4. [`sampler`]: adaptive random-walk Metropolis-within-Gibbs.
//! 5. [`posterior`]: means, HPD intervals, significance, group differences.
//! 6. [`simgen`]: a forward simulator with known parameters for recovery
//!    studies.
#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod hazard;
pub mod keyactions;
mod math;
pub mod posterior;
pub mod sampler;
pub mod simgen;

pub use crate::data::{ActionCatalog, Dataset, Event, RespondentRecord, StateIndex};
pub use crate::error::{DataError, Error, ModelError};
pub use crate::hazard::{ModelData, ParamState};
pub use crate::keyactions::KeyActionReport;
pub use crate::posterior::PosteriorSummary;
pub use crate::sampler::{ChainStore, McmcConfig, PriorConfig};
pub use crate::simgen::SimDesign;
