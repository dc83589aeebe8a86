//! Populating a store from dumps, Git repositories and visit records.

mod dump;
mod git;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dag::Visit;
use crate::error::Result;
use crate::id::{NodeId, NodeKind};
use crate::storage::Store;

pub use dump::{export_dump, load_dump, open_dump, DumpWriter};
pub use git::ingest_git_repository;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct KindCount {
    pub inserted: u64,
    pub duplicates: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    /// Keyed by node kind name.
    pub nodes: BTreeMap<&'static str, KindCount>,
    pub origins_added: u64,
    pub visits_added: u64,
    pub visits_duplicate: u64,
}

impl IngestStats {
    pub fn record(&mut self, kind: NodeKind, inserted: bool) {
        let c = self.nodes.entry(kind.name()).or_default();
        if inserted {
            c.inserted += 1;
        } else {
            c.duplicates += 1;
        }
    }

    pub fn kind(&self, kind: NodeKind) -> KindCount {
        self.nodes.get(kind.name()).copied().unwrap_or_default()
    }

    pub fn inserted_total(&self) -> u64 {
        self.nodes.values().map(|c| c.inserted).sum()
    }
}

/// Appends a visit binding `origin_url` to a stored snapshot.
pub fn record_visit(store: &Store, origin_url: &str, timestamp: i64, snapshot: NodeId) -> Result<Visit> {
    store.write(|w| w.record_visit(origin_url, timestamp, snapshot))
}
