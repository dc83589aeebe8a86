//! Provenance tracking over a deduplicated Merkle DAG of source code
//! artifacts.
//!
//! The crate ingests version control histories into a content-addressed
//! store ([`dag`], [`ingest`]), builds three provenance indexes over the
//! revisions in chronological order ([`provenance`]), and computes growth
//! and multiplication statistics over the archive ([`analytics`]).
//!
//! The compact index relies on isochrone subgraphs ([`isochrone`]): for a
//! revision processed at time `t`, the directories first observed at `t`.
//! Contents attached to those directories are recorded directly against the
//! revision; older directories reached from them are recorded once per
//! crossing and flattened only the first time they are met.

pub mod analytics;
pub mod dag;
pub mod error;
pub mod gen;
pub mod id;
pub mod ingest;
pub mod isochrone;
pub mod provenance;
pub mod storage;

pub use error::{Error, Result};
pub use id::{HashAlgo, NodeId, NodeKind};
pub use storage::{OpenMode, Store, StoreOptions};
