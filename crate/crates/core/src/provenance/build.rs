use std::collections::HashMap;
use std::rc::Rc;

use serde::Serialize;

use super::{key, timed_key, Model, ModelState};
use crate::dag::{DagRead, Directory, RevisionRef, TimestampFilter};
use crate::error::Result;
use crate::id::{NodeId, NodeKind};
use crate::isochrone::{
    check_order, compute_isochrone, join_path, update_clock, Clock, ClockChange, ClockRead, StoredClock,
    StoredClockMut, Traversal,
};
use crate::storage::{encode_ts, KvRead, Keyspace, Store, WriteView};

#[derive(Clone, Debug)]
pub struct BuildOptions {
    /// Fail on a revision older than one already processed instead of
    /// marking the index approximate.
    pub strict: bool,
    pub filter: TimestampFilter,
    /// Revisions per committed transaction.
    pub chunk: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { strict: false, filter: TimestampFilter::ALL, chunk: 2048 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BuildReport {
    pub model: Model,
    pub processed: u64,
    pub skipped: u64,
    pub state: ModelState,
}

/// Parsed directories, shared across revisions of one build.
struct DirCache {
    map: HashMap<NodeId, Rc<Directory>>,
}

impl DirCache {
    const LIMIT: usize = 1 << 18;

    fn get<V: DagRead + ?Sized>(&mut self, view: &V, id: &NodeId) -> Result<Rc<Directory>> {
        if let Some(d) = self.map.get(id) {
            return Ok(d.clone());
        }
        if self.map.len() >= Self::LIMIT {
            self.map.clear();
        }
        let d = Rc::new(view.get_directory(id)?);
        self.map.insert(*id, d.clone());
        Ok(d)
    }

    /// Every `(content, path)` below `root`, paths relative to it.
    fn flatten<V: DagRead + ?Sized>(
        &mut self,
        view: &V,
        root: &NodeId,
        mut emit: impl FnMut(&NodeId, &[u8]) -> Result<()>,
    ) -> Result<()> {
        let mut stack = vec![(*root, Vec::new())];
        while let Some((d, path)) = stack.pop() {
            let dir = self.get(view, &d)?;
            for e in dir.entries() {
                match e.target.kind() {
                    NodeKind::Content => emit(&e.target, &join_path(&path, &e.name))?,
                    NodeKind::Directory => stack.push((e.target, join_path(&path, &e.name))),
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Brings `model` up to date with every stored revision accepted by the
/// filter. Revisions already in the model are skipped, so the call is
/// incremental and idempotent.
pub fn build(store: &Store, model: Model, opts: &BuildOptions) -> Result<BuildReport> {
    let mut cache = DirCache { map: HashMap::new() };
    let mut resume: Option<RevisionRef> = None;
    let mut processed = 0;
    let mut skipped = 0;
    loop {
        let refs: Vec<RevisionRef> = {
            let view = store.read()?;
            let refs = view
                .revision_refs_after(opts.filter, resume.as_ref())?
                .take(opts.chunk.max(1))
                .collect::<Result<_>>()?;
            refs
        };
        let Some(last) = refs.last().copied() else { break };
        let (p, s) = store.write(|w| {
            let mut state = ModelState::load(&*w, model)?.unwrap_or_default();
            let (mut p, mut s) = (0u64, 0u64);
            for r in &refs {
                if StoredClock::new(&*w, model.clock()).knows(&r.id)? {
                    s += 1;
                    continue;
                }
                if check_order(state.high_water, r, opts.strict)? {
                    state.approximate = true;
                }
                match model {
                    Model::Flat => flat_revision(w, &mut cache, &mut state, r)?,
                    Model::Recursive => recursive_revision(w, &mut cache, &mut state, r)?,
                    Model::Compact => compact_revision(w, &mut cache, &mut state, r)?,
                }
                state.revisions += 1;
                state.fold_revision(&r.id);
                state.high_water = Some(state.high_water.map_or(r.timestamp, |h| h.max(r.timestamp)));
                p += 1;
            }
            state.save(w, model)?;
            Ok((p, s))
        })?;
        processed += p;
        skipped += s;
        resume = Some(last);
    }
    if processed == 0 && skipped == 0 {
        // Nothing to do, but an empty index still counts as built.
        store.write(|w| {
            if ModelState::load(&*w, model)?.is_none() {
                ModelState::default().save(w, model)?;
            }
            Ok(())
        })?;
    }
    let state = ModelState::require(&store.read()?, model)?;
    Ok(BuildReport { model, processed, skipped, state })
}

fn flat_revision(w: &mut WriteView<'_>, cache: &mut DirCache, state: &mut ModelState, r: &RevisionRef) -> Result<()> {
    let mut found: Vec<(NodeId, Vec<u8>)> = Vec::new();
    cache.flatten(&*w, &r.root, |c, p| {
        found.push((*c, p.to_vec()));
        Ok(())
    })?;
    let mut clock = StoredClockMut::new(w, Keyspace::FlatClock);
    for (c, _) in &found {
        if clock.lower(*c, r.timestamp)? == ClockChange::Inserted {
            state.contents += 1;
        }
    }
    clock.lower(r.id, r.timestamp)?;
    for (c, p) in &found {
        w.put(Keyspace::Flat, &timed_key(c, r.timestamp, &r.id, p), b"")?;
    }
    Ok(())
}

fn recursive_revision(
    w: &mut WriteView<'_>,
    cache: &mut DirCache,
    state: &mut ModelState,
    r: &RevisionRef,
) -> Result<()> {
    let iso = compute_isochrone(&*w, &StoredClock::new(&*w, Keyspace::RecClock), r, Traversal::Pruned)?;
    w.put(Keyspace::RecDr, &key(&[r.root.digest(), &encode_ts(r.timestamp), r.id.digest()]), b"")?;
    for d in &iso.inner_dirs {
        let dir = cache.get(&*w, d)?;
        for e in dir.entries() {
            match e.target.kind() {
                NodeKind::Content => {
                    w.put(Keyspace::RecCd, &key(&[e.target.digest(), d.digest(), &e.name]), b"")?;
                }
                NodeKind::Directory => {
                    w.put(Keyspace::RecDd, &key(&[e.target.digest(), d.digest(), &e.name]), b"")?;
                }
                _ => state.submodule_edges += 1,
            }
        }
    }
    let delta = update_clock(&mut StoredClockMut::new(w, Keyspace::RecClock), &iso)?;
    state.contents += delta.contents;
    state.directories += delta.directories;
    Ok(())
}

fn compact_revision(
    w: &mut WriteView<'_>,
    cache: &mut DirCache,
    state: &mut ModelState,
    r: &RevisionRef,
) -> Result<()> {
    let iso = compute_isochrone(&*w, &StoredClock::new(&*w, Keyspace::CompactClock), r, Traversal::Pruned)?;
    for (c, path) in &iso.inner_content_edges {
        w.put(Keyspace::CompactCer, &timed_key(c, r.timestamp, &r.id, path), b"")?;
    }
    for edge in &iso.frontier_edges {
        let d = edge.dir;
        w.put(Keyspace::CompactDor, &timed_key(&d, r.timestamp, &r.id, &edge.path), b"")?;
        if w.contains(Keyspace::CompactDirs, &d.key())? {
            continue;
        }
        let mut found: Vec<(NodeId, Vec<u8>)> = Vec::new();
        cache.flatten(&*w, &d, |c, p| {
            found.push((*c, p.to_vec()));
            Ok(())
        })?;
        for (c, p) in &found {
            w.put(Keyspace::CompactCod, &key(&[c.digest(), d.digest(), p]), b"")?;
        }
        let first = StoredClock::new(&*w, Keyspace::CompactClock).timestamp(&d)?.unwrap_or(r.timestamp);
        w.put(Keyspace::CompactDirs, &d.key(), &encode_ts(first))?;
        state.directories += 1;
    }
    let delta = update_clock(&mut StoredClockMut::new(w, Keyspace::CompactClock), &iso)?;
    state.contents += delta.contents;
    Ok(())
}
