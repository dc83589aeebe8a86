use std::collections::{BTreeMap, HashMap, HashSet};

use super::Occurrence;
use crate::dag::{DagNode, DagRead};
use crate::error::{Error, Result};
use crate::id::{NodeId, NodeKind};
use crate::storage::KvRead;

/// Revision to origin layer, derived from the visit journal: an origin
/// holds every revision reachable from any snapshot it was visited at.
#[derive(Clone, Debug, Default)]
pub struct RevisionOrigins {
    origins: Vec<String>,
    by_origin: Vec<HashSet<NodeId>>,
    by_revision: HashMap<NodeId, Vec<u32>>,
}

impl RevisionOrigins {
    pub fn compute<V: KvRead + ?Sized>(view: &V) -> Result<RevisionOrigins> {
        let visits = view.visits()?;
        if visits.is_empty() {
            return Err(Error::MissingVisitJournal);
        }
        let mut snapshots: BTreeMap<String, HashSet<NodeId>> = BTreeMap::new();
        for v in visits {
            snapshots.entry(v.origin).or_default().insert(v.snapshot);
        }
        let mut out = RevisionOrigins::default();
        for (idx, (origin, snaps)) in snapshots.into_iter().enumerate() {
            let mut seen: HashSet<NodeId> = HashSet::new();
            let mut stack: Vec<NodeId> = Vec::new();
            for s in snaps {
                if let DagNode::Snapshot(snap) = view.get_node(&s)? {
                    stack.extend(snap.branches.into_values());
                }
            }
            while let Some(id) = stack.pop() {
                match id.kind() {
                    NodeKind::Release => {
                        if let DagNode::Release(r) = view.get_node(&id)? {
                            stack.push(r.target);
                        }
                    }
                    NodeKind::Revision => {
                        if !seen.insert(id) {
                            continue;
                        }
                        match view.get_revision(&id) {
                            Ok(r) => stack.extend(r.parents),
                            Err(Error::NotFound(_)) => {
                                seen.remove(&id);
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    _ => {}
                }
            }
            for r in &seen {
                out.by_revision.entry(*r).or_default().push(idx as u32);
            }
            out.origins.push(origin);
            out.by_origin.push(seen);
        }
        Ok(out)
    }

    /// Origin URLs in lexicographic order.
    pub fn origins(&self) -> &[String] {
        &self.origins
    }

    pub fn revisions_of(&self, origin: &str) -> Option<&HashSet<NodeId>> {
        let i = self.origins.binary_search_by(|o| o.as_str().cmp(origin)).ok()?;
        Some(&self.by_origin[i])
    }

    /// Origins holding `revision`, in lexicographic order.
    pub fn origins_of(&self, revision: &NodeId) -> Vec<&str> {
        self.by_revision
            .get(revision)
            .map(|v| v.iter().map(|&i| self.origins[i as usize].as_str()).collect())
            .unwrap_or_default()
    }

    /// Iterates `(origin, revision count)` pairs.
    pub fn sizes(&self) -> impl Iterator<Item = (&str, usize)> {
        self.origins.iter().map(String::as_str).zip(self.by_origin.iter().map(HashSet::len))
    }

    pub fn revisions(&self) -> impl Iterator<Item = (&NodeId, usize)> {
        self.by_revision.iter().map(|(r, o)| (r, o.len()))
    }

    /// Attaches origins to a stream of occurrences.
    pub fn decorate<'a, I>(&'a self, occurrences: I) -> impl Iterator<Item = Result<(Occurrence, Vec<&'a str>)>> + 'a
    where
        I: Iterator<Item = Result<Occurrence>> + 'a,
    {
        occurrences.map(move |o| {
            let o = o?;
            let origins = self.origins_of(&o.revision);
            Ok((o, origins))
        })
    }
}
