//! Inductive graph unlearning toolkit.
//!
//! The pipeline partitions a labeled training graph into fair and balanced
//! shards ([`partition`]), repairs each shard's missing neighbors
//! ([`repair`]), trains an isolated model per shard ([`model`]), weights the
//! shards by graph-kernel similarity to the test graph ([`kernel`]), and
//! services node, edge and feature unlearning requests by retraining only
//! the affected shards ([`engine`]).

pub mod cli;
pub mod engine;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod partition;
pub mod kernel;
pub mod repair;

pub use error::{GuideError, Result};
