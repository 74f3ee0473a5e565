//! Auditing language models for memorized economic data.
//!
//! The pipeline is: load series and text ([`dataset`]), render prompts
//! ([`prompts`]), query or replay a model ([`gateway`]), score the answers
//! ([`metrics`], [`stats`]), probe embeddings ([`probe`]) and write report
//! bundles ([`report`]). [`theory`] mechanizes the non-identification
//! argument behind the cutoff-prompt audits.

pub mod dataset;
pub mod error;
pub mod gateway;
pub mod metrics;
pub mod period;
pub mod probe;
pub mod prompts;
pub mod report;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
