//! Discourse diagnostics and intervention toolkit.
//!
//! The crate is organised along the analysis workflow:
//!
//! - [`corpus`]: utterance data model, ingestion and annotation agreement.
//! - [`biomarker`]: tokenization, lexicons, per-utterance profiles, prevalence
//!   tables and threshold calibration.
//! - [`association`]: PMI association mining and predictive validation with a
//!   regularised logistic regression.
//! - [`synth`]: seeded phrase-bank dialogue generator.
//! - [`scorer`]: weighted alignment loss over candidate texts.
//! - [`reframer`]: trigger detection and constrained reframing suggestions.
//! - [`stats`]: effect sizes, power planning, Welch tests, OLS with interaction
//!   and the network diversity index.
//! - [`simlab`]: agent-based cluster-randomised trial simulator.

pub mod association;
pub mod biomarker;
pub mod corpus;
pub mod defaults;
mod error;
pub mod records;
pub mod reframer;
pub mod scorer;
pub mod simlab;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
