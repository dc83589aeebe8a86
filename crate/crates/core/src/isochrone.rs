//! Isochrone subgraphs and the provenance clock.
//!
//! Revisions are processed in non-decreasing timestamp order. The clock maps
//! every node seen so far to the earliest timestamp it was observed at. For a
//! revision `R` at `t`, a directory is *inner* when the clock has never seen
//! it: under chronological processing its first timestamp becomes `t`, which
//! is exactly the condition "clock value equals t_R". Because a directory
//! holding any novel node is itself novel, everything below a non-inner
//! directory is already clocked and traversal stops there.
//!
//! Edges from an inner directory to a clocked one form the *frontier*. When
//! the root directory itself is already clocked, the result carries a single
//! virtual frontier edge with no parent and an empty path.

use std::collections::{BTreeSet, HashMap};

use crate::dag::{DagRead, RevisionRef};
use crate::error::{Error, Result};
use crate::id::{NodeId, NodeKind};
use crate::storage::{decode_ts, encode_ts, KvRead, Keyspace, WriteView};

pub trait ClockRead {
    fn timestamp(&self, id: &NodeId) -> Result<Option<i64>>;

    fn knows(&self, id: &NodeId) -> Result<bool> {
        Ok(self.timestamp(id)?.is_some())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClockChange {
    Inserted,
    Lowered,
    Unchanged,
}

/// Monotone (min-semantics) clock.
pub trait Clock: ClockRead {
    /// Records `ts` for `id` unless an earlier or equal value is known.
    fn lower(&mut self, id: NodeId, ts: i64) -> Result<ClockChange>;
}

/// In-memory clock.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemClock {
    map: HashMap<NodeId, i64>,
}

impl MemClock {
    pub fn new() -> MemClock {
        MemClock::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &i64)> {
        self.map.iter()
    }
}

impl ClockRead for MemClock {
    fn timestamp(&self, id: &NodeId) -> Result<Option<i64>> {
        Ok(self.map.get(id).copied())
    }
}

impl Clock for MemClock {
    fn lower(&mut self, id: NodeId, ts: i64) -> Result<ClockChange> {
        Ok(match self.map.get_mut(&id) {
            None => {
                self.map.insert(id, ts);
                ClockChange::Inserted
            }
            Some(cur) if ts < *cur => {
                *cur = ts;
                ClockChange::Lowered
            }
            Some(_) => ClockChange::Unchanged,
        })
    }
}

/// Read-only clock persisted in a keyspace.
pub struct StoredClock<'a, V: ?Sized> {
    view: &'a V,
    keyspace: Keyspace,
}

impl<'a, V: KvRead + ?Sized> StoredClock<'a, V> {
    pub fn new(view: &'a V, keyspace: Keyspace) -> Self {
        StoredClock { view, keyspace }
    }
}

fn stored_get<V: KvRead + ?Sized>(view: &V, ks: Keyspace, id: &NodeId) -> Result<Option<i64>> {
    view.get(ks, &id.key())?.map(|v| decode_ts(&v)).transpose()
}

impl<V: KvRead + ?Sized> ClockRead for StoredClock<'_, V> {
    fn timestamp(&self, id: &NodeId) -> Result<Option<i64>> {
        stored_get(self.view, self.keyspace, id)
    }
}

/// Writable clock persisted in a keyspace of an open transaction.
pub struct StoredClockMut<'a, 'txn> {
    view: &'a mut WriteView<'txn>,
    keyspace: Keyspace,
}

impl<'a, 'txn> StoredClockMut<'a, 'txn> {
    pub fn new(view: &'a mut WriteView<'txn>, keyspace: Keyspace) -> Self {
        StoredClockMut { view, keyspace }
    }
}

impl ClockRead for StoredClockMut<'_, '_> {
    fn timestamp(&self, id: &NodeId) -> Result<Option<i64>> {
        stored_get(&*self.view, self.keyspace, id)
    }
}

impl Clock for StoredClockMut<'_, '_> {
    fn lower(&mut self, id: NodeId, ts: i64) -> Result<ClockChange> {
        let key = id.key();
        let change = match self.view.get(self.keyspace, &key)? {
            None => ClockChange::Inserted,
            Some(v) if ts < decode_ts(&v)? => ClockChange::Lowered,
            Some(_) => return Ok(ClockChange::Unchanged),
        };
        self.view.put(self.keyspace, &key, &encode_ts(ts))?;
        Ok(change)
    }
}

/// Directory edge leaving the isochrone subgraph. `parent` is `None` for the
/// virtual edge to an already clocked root.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrontierEdge {
    pub parent: Option<NodeId>,
    pub dir: NodeId,
    pub path: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsochroneResult {
    pub revision: NodeId,
    pub timestamp: i64,
    pub root: NodeId,
    pub inner_dirs: BTreeSet<NodeId>,
    pub frontier_edges: Vec<FrontierEdge>,
    /// `(content, path from root)` for every content entry of an inner
    /// directory, once per path.
    pub inner_content_edges: Vec<(NodeId, Vec<u8>)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Traversal {
    /// Stop at clocked directories.
    Pruned,
    /// Visit the whole tree; used to check that pruning loses nothing.
    Full,
}

pub fn join_path(prefix: &[u8], name: &[u8]) -> Vec<u8> {
    if prefix.is_empty() {
        return name.to_vec();
    }
    let mut p = Vec::with_capacity(prefix.len() + 1 + name.len());
    p.extend_from_slice(prefix);
    p.push(b'/');
    p.extend_from_slice(name);
    p
}

/// Computes the isochrone subgraph of `rev` against the current clock.
pub fn compute_isochrone<D, C>(dag: &D, clock: &C, rev: &RevisionRef, traversal: Traversal) -> Result<IsochroneResult>
where
    D: DagRead + ?Sized,
    C: ClockRead + ?Sized,
{
    let mut result = IsochroneResult {
        revision: rev.id,
        timestamp: rev.timestamp,
        root: rev.root,
        inner_dirs: BTreeSet::new(),
        frontier_edges: Vec::new(),
        inner_content_edges: Vec::new(),
    };
    let root_inner = !clock.knows(&rev.root)?;
    if !root_inner {
        result.frontier_edges.push(FrontierEdge { parent: None, dir: rev.root, path: Vec::new() });
        if traversal == Traversal::Pruned {
            return Ok(result);
        }
    }
    // (directory, path, reached through inner directories only)
    let mut stack: Vec<(NodeId, Vec<u8>, bool)> = vec![(rev.root, Vec::new(), root_inner)];
    while let Some((dir_id, path, inner)) = stack.pop() {
        if inner {
            result.inner_dirs.insert(dir_id);
        }
        let dir = dag.get_directory(&dir_id)?;
        for e in dir.entries().iter().rev() {
            match e.target.kind() {
                NodeKind::Content if inner => {
                    result.inner_content_edges.push((e.target, join_path(&path, &e.name)));
                }
                NodeKind::Directory => {
                    let child_inner = !clock.knows(&e.target)?;
                    if inner && !child_inner {
                        result.frontier_edges.push(FrontierEdge {
                            parent: Some(dir_id),
                            dir: e.target,
                            path: join_path(&path, &e.name),
                        });
                    }
                    if (inner && child_inner) || traversal == Traversal::Full {
                        stack.push((e.target, join_path(&path, &e.name), inner && child_inner));
                    }
                }
                _ => {}
            }
        }
    }
    Ok(result)
}

/// Nodes newly entered into the clock by [`update_clock`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClockDelta {
    pub contents: u64,
    pub directories: u64,
    pub revisions: u64,
    pub lowered: u64,
}

impl ClockDelta {
    fn record(&mut self, kind: NodeKind, change: ClockChange) {
        match change {
            ClockChange::Inserted => match kind {
                NodeKind::Content => self.contents += 1,
                NodeKind::Directory => self.directories += 1,
                NodeKind::Revision => self.revisions += 1,
                _ => {}
            },
            ClockChange::Lowered => self.lowered += 1,
            ClockChange::Unchanged => {}
        }
    }
}

/// Stamps inner directories, their contents and the revision with `t_R`.
/// Existing earlier entries are kept.
pub fn update_clock<C: Clock + ?Sized>(clock: &mut C, result: &IsochroneResult) -> Result<ClockDelta> {
    let t = result.timestamp;
    let mut delta = ClockDelta::default();
    for d in &result.inner_dirs {
        delta.record(NodeKind::Directory, clock.lower(*d, t)?);
    }
    for (c, _) in &result.inner_content_edges {
        delta.record(NodeKind::Content, clock.lower(*c, t)?);
    }
    delta.record(NodeKind::Revision, clock.lower(result.revision, t)?);
    Ok(delta)
}

/// Ordering guard shared by the builders. Returns `true` when `rev` arrives
/// earlier than an already processed timestamp in permissive mode.
pub fn check_order(high_water: Option<i64>, rev: &RevisionRef, strict: bool) -> Result<bool> {
    match high_water {
        Some(hw) if rev.timestamp < hw => {
            if strict {
                Err(Error::ClockRegression { revision: rev.id, timestamp: rev.timestamp, high_water: hw })
            } else {
                Ok(true)
            }
        }
        _ => Ok(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{Content, DagNode, Directory, DirectoryEntry, Revision};
    use crate::id::HashAlgo;
    use crate::storage::Store;

    struct T1 {
        store: Store,
        f1: NodeId,
        f2: NodeId,
        d1: NodeId,
        d2: NodeId,
        revs: Vec<RevisionRef>,
    }

    fn t1() -> T1 {
        let store = Store::in_memory(HashAlgo::Sha1).unwrap();
        let (f1, f2, d1, d2, revs) = store
            .write(|w| {
                let f1 = w.insert_node(&DagNode::Content(Content::from_bytes(b"f1\n".to_vec(), HashAlgo::Sha1)))?.0;
                let f2 = w.insert_node(&DagNode::Content(Content::from_bytes(b"f2\n".to_vec(), HashAlgo::Sha1)))?.0;
                let d1 = w.insert_node(&DagNode::Directory(Directory::new(vec![DirectoryEntry::file("f1", f1)])?))?.0;
                let d2 = w
                    .insert_node(&DagNode::Directory(Directory::new(vec![
                        DirectoryEntry::file("f1", f1),
                        DirectoryEntry::file("f2", f2),
                    ])?))?
                    .0;
                let mut revs = Vec::new();
                for (root, t, m) in [(d1, 100, "A"), (d2, 200, "B"), (d2, 300, "C")] {
                    let id = w.insert_node(&DagNode::Revision(Revision::simple(root, vec![], "dev <d@x>", t, m)))?.0;
                    revs.push(RevisionRef { timestamp: t, id, root });
                }
                Ok((f1, f2, d1, d2, revs))
            })
            .unwrap();
        T1 { store, f1, f2, d1, d2, revs }
    }

    #[test]
    fn first_revision_is_entirely_inner() {
        let t = t1();
        let view = t.store.read().unwrap();
        let r = compute_isochrone(&view, &MemClock::new(), &t.revs[0], Traversal::Pruned).unwrap();
        assert_eq!(r.inner_dirs, BTreeSet::from([t.d1]));
        assert!(r.frontier_edges.is_empty());
        assert_eq!(r.inner_content_edges, vec![(t.f1, b"f1".to_vec())]);
    }

    #[test]
    fn t1_trace() {
        let t = t1();
        let view = t.store.read().unwrap();
        let mut clock = MemClock::new();
        let a = compute_isochrone(&view, &clock, &t.revs[0], Traversal::Pruned).unwrap();
        update_clock(&mut clock, &a).unwrap();
        assert_eq!(clock.timestamp(&t.f1).unwrap(), Some(100));

        let b = compute_isochrone(&view, &clock, &t.revs[1], Traversal::Pruned).unwrap();
        assert_eq!(b.inner_dirs, BTreeSet::from([t.d2]));
        assert!(b.frontier_edges.is_empty());
        let mut edges = b.inner_content_edges.clone();
        edges.sort();
        let mut want = vec![(t.f1, b"f1".to_vec()), (t.f2, b"f2".to_vec())];
        want.sort();
        assert_eq!(edges, want);
        update_clock(&mut clock, &b).unwrap();

        let c = compute_isochrone(&view, &clock, &t.revs[2], Traversal::Pruned).unwrap();
        assert!(c.inner_dirs.is_empty());
        assert_eq!(c.frontier_edges, vec![FrontierEdge { parent: None, dir: t.d2, path: vec![] }]);
        assert!(c.inner_content_edges.is_empty());

        let before = clock.clone();
        update_clock(&mut clock, &b).unwrap();
        assert_eq!(clock, before, "re-applying a result is a no-op");
    }

    #[test]
    fn clock_keeps_minimum() {
        let t = t1();
        let mut clock = MemClock::new();
        assert_eq!(clock.lower(t.f1, 200).unwrap(), ClockChange::Inserted);
        assert_eq!(clock.lower(t.f1, 100).unwrap(), ClockChange::Lowered);
        assert_eq!(clock.lower(t.f1, 300).unwrap(), ClockChange::Unchanged);
        assert_eq!(clock.timestamp(&t.f1).unwrap(), Some(100));
    }

    #[test]
    fn stored_clock_matches_memory_clock() {
        let t = t1();
        t.store
            .write(|w| {
                let mut c = StoredClockMut::new(w, Keyspace::CompactClock);
                assert_eq!(c.lower(t.f2, 50)?, ClockChange::Inserted);
                assert_eq!(c.lower(t.f2, 60)?, ClockChange::Unchanged);
                assert_eq!(c.lower(t.f2, -5)?, ClockChange::Lowered);
                Ok(())
            })
            .unwrap();
        let view = t.store.read().unwrap();
        assert_eq!(StoredClock::new(&view, Keyspace::CompactClock).timestamp(&t.f2).unwrap(), Some(-5));
    }

    #[test]
    fn order_guard() {
        let t = t1();
        assert!(!check_order(None, &t.revs[0], true).unwrap());
        assert!(!check_order(Some(100), &t.revs[0], true).unwrap());
        assert!(matches!(check_order(Some(150), &t.revs[0], true), Err(Error::ClockRegression { .. })));
        assert!(check_order(Some(150), &t.revs[0], false).unwrap());
    }

    #[test]
    fn full_traversal_agrees_on_t1() {
        let t = t1();
        let view = t.store.read().unwrap();
        let mut clock = MemClock::new();
        for r in &t.revs {
            let p = compute_isochrone(&view, &clock, r, Traversal::Pruned).unwrap();
            let f = compute_isochrone(&view, &clock, r, Traversal::Full).unwrap();
            assert_eq!(p, f);
            update_clock(&mut clock, &p).unwrap();
        }
    }
}
