//! Deduplicated, content-addressed Merkle DAG of source code artifacts.

pub mod manifest;
pub mod model;
pub mod store;

pub use manifest::compute_node_id;
pub use model::*;
pub use store::{node_ids, validate_dag, DagRead, Finding, RevisionRef, TimestampFilter, ValidationReport};
