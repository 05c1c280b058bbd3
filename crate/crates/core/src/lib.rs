//! Estimation and dispersion-based bounding of the variational gap
//! `log E[X] - E[log X]` of likelihood-ratio estimators.
//!
//! The crate is organized around one currency: batches of log
//! likelihood-ratio samples `y = log(p/q)` ([`stats::LogWeightBatch`]).
//!
//! - [`stats`] — stable primitives: log-sum-exp, medians, dispersion
//!   summaries on the X (`exp y`) and Y scales.
//! - [`models`] — tractable models with exact log-evidence and exact
//!   posteriors, used as ground-truth oracles.
//! - [`estimators`] — ELBO and K-sample averaged lower-bound estimates,
//!   common-random-number sweeps over K, coupling comparisons.
//! - [`bounds`] — the mean-median dispersion inequality, the tangent-line
//!   gap bound, the standard-deviation corollary with its applicability
//!   gate, and an end-to-end diagnose report.
//! - [`optim`] — reparameterized gradient ascent on the proposal
//!   parameters, tracing gap and dispersion together.
//! - [`figures`] — deterministic SVG emission for the concentration
//!   scatter and the tangent-majorizer illustration.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod figures;
pub mod models;
pub mod optim;
pub mod seeding;
pub mod stats;

pub use error::{Error, Result};
