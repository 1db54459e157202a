//! Style-protectability triage for AI-generated artwork.
//!
//! The crate trains a two-head multimodal clusterer over paired image/text
//! embeddings, measures partition agreement, and judges a candidate set of
//! AI-generated works against a persistent corpus of reference styles on
//! three measurable criteria: consistency, uniqueness and prompt alignment.

pub mod cli;
pub mod corpus;
pub mod dgc;
pub mod embedding;
pub mod judgment;
pub mod metrics;
pub mod partition;
pub mod report;
pub mod synthetic;

pub use partition::Partition;
