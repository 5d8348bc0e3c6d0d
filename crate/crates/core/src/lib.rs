//! Synthetic control and ridge-augmented synthetic control estimation.
//!
//! The crate covers the whole batch pipeline: panel ingestion and epidemic-day
//! alignment ([`panel`]), the sixteen predictor recipes ([`specs`]), weight
//! estimation and cross-validated ridge augmentation ([`solver`]), placebo,
//! leave-one-out and jackknife+ inference ([`inference`]), and a seeded
//! factor-model generator with a replication harness ([`synthgen`]).

pub mod error;
pub mod estimate;
pub mod inference;
pub mod panel;
pub mod solver;
pub mod specs;
pub mod synthgen;

pub use error::{Error, Result};
