//! Topic-conditioned claim generation.
//!
//! The crate covers the whole workflow: preparing (topic, claim) training
//! data, fine-tuning and sampling through a pluggable language-model backend,
//! ranking generated texts with claim-detection style scorers, automatic
//! metrics (perplexity, prefix ranking accuracy, predicted quality and
//! stance), crowd-annotation aggregation with agreement statistics, and
//! novelty analysis against a corpus of existing claims.

pub mod annotation;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod lm;
pub mod manifest;
pub mod novelty;
pub mod pipeline;
pub mod report;
pub mod scoring;

pub use error::{Error, Result};
