//! Knowledge-graph driven multi-agent data distillation.
//!
//! The pipeline half segments documents by embedding similarity, runs a
//! five-agent extract/verify loop over a chat backend, and turns verified
//! triples into instruction-tuning samples. The lab half checks the
//! supporting information-theoretic, optimization and control results on
//! small exact or simulated instances.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod config;
pub mod control;
pub mod datafactory;
pub mod error;
pub mod fsutil;
mod http;
pub mod infotheory;
pub mod kg;
pub mod metrics;
pub mod pipeline;
pub mod segmenter;
pub mod sgdlab;

pub use config::{PipelineConfig, CONFIG_SCHEMA_VERSION};
pub use error::{Error, Result};
pub use kg::{KnowledgeGraph, Provenance, Triple, TripleKey};
pub use segmenter::{Document, Segment};
