//! Explabox: a model-agnostic transparency and audit engine for black-box
//! text classifiers and regressors.
//!
//! Ingestibles (datasets and models) are turned into digestibles (statistics,
//! metrics, explanations, test reports) through four analyses:
//!
//! - [`explore`]: descriptive statistics per named split
//! - [`examine`]: performance metrics and correct/incorrect drill-down
//! - [`explain`]: local attributions (LIME, KernelSHAP) and global summaries
//! - [`expose`]: robustness, security and fairness testing
//!
//! Results are assembled into canonical, hashable reports by [`report`] and
//! served over HTTP by [`service`].

pub mod bridge;
pub mod cli;
pub mod error;
pub mod examine;
pub mod explain;
pub mod explore;
pub mod expose;
pub mod ingest;
pub mod par;
pub mod report;
pub mod rng;
pub mod service;
pub mod session;

pub use error::{Error, Result};

/// Version string recorded in every report and digestible provenance.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
