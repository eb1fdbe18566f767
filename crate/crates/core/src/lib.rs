//! Knowledge-graph path reasoning for explainable recommendation.
//!
//! The crate builds top-n recommendations where every product comes with
//! the reasoning path that reached it and a templated explanation, and it
//! measures and optimises those paths for the recency of the linking
//! interaction, the popularity of the shared entity and the diversity of
//! path types.

pub mod agent;
pub mod config;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod explain;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod records;
pub mod rerank;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{
    chronological_split, Direction, EntityId, Hop, InteractionLog, KnowledgeGraph, ReasoningPath,
    RelationId,
};
