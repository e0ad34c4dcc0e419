//! Radiology report evaluation toolkit.
//!
//! - [`corpus`]: ingestion, section extraction, training-set filtering,
//!   example weights and stratified sampling.
//! - [`labeler`]: rule-based finding labels.
//! - [`metrics`]: NLG and clinical metrics with bootstrap intervals.
//! - [`decoder`]: sequence scoring, beam search and nucleus sampling.
//! - [`workflow`]: blinded rating tasks, assignment and the event log.
//! - [`analysis`]: result tables from recorded responses.

pub mod analysis;
pub mod corpus;
pub mod decoder;
pub mod labeler;
pub mod metrics;
pub mod text;
pub mod workflow;
