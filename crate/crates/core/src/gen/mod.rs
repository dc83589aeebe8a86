//! Deterministic synthetic corpora.

mod sloc;
mod synth;

use std::collections::HashSet;
use std::io::Write;

use crate::dag::{compute_node_id, Content, DagNode, Directory, DirectoryEntry, Revision, Visit};
use crate::error::Result;
use crate::id::{HashAlgo, NodeId};
use crate::ingest::DumpWriter;
use crate::storage::{KvRead, Store, WriteView};

pub use sloc::{planted_sloc, PlantedLine, PlantedSloc};
pub use synth::{generate, GenParams, GenReport, RevisionCount};

/// Destination of generated nodes.
pub trait Sink {
    fn algo(&self) -> HashAlgo;
    /// Stores `node` (once) and returns its id.
    fn node(&mut self, node: &DagNode) -> Result<NodeId>;
    fn visit(&mut self, origin: &str, timestamp: i64, snapshot: NodeId) -> Result<()>;
}

pub struct StoreSink<'a, 'txn> {
    w: &'a mut WriteView<'txn>,
}

impl<'a, 'txn> StoreSink<'a, 'txn> {
    pub fn new(w: &'a mut WriteView<'txn>) -> Self {
        StoreSink { w }
    }
}

impl Sink for StoreSink<'_, '_> {
    fn algo(&self) -> HashAlgo {
        self.w.algo()
    }

    fn node(&mut self, node: &DagNode) -> Result<NodeId> {
        Ok(self.w.insert_node(node)?.0)
    }

    fn visit(&mut self, origin: &str, timestamp: i64, snapshot: NodeId) -> Result<()> {
        let v = Visit { origin: origin.to_string(), timestamp, snapshot };
        if !self.w.has_visit(&v)? {
            self.w.record_visit(origin, timestamp, snapshot)?;
        }
        Ok(())
    }
}

/// Writes a dump; every node is emitted once.
pub struct DumpSink<W: Write> {
    writer: DumpWriter<W>,
    algo: HashAlgo,
    seen: HashSet<NodeId>,
    origins: HashSet<String>,
}

impl<W: Write> DumpSink<W> {
    pub fn new(out: W, algo: HashAlgo) -> Self {
        DumpSink { writer: DumpWriter::new(out), algo, seen: HashSet::new(), origins: HashSet::new() }
    }

    pub fn finish(self) -> Result<W> {
        self.writer.finish()
    }
}

impl<W: Write> Sink for DumpSink<W> {
    fn algo(&self) -> HashAlgo {
        self.algo
    }

    fn node(&mut self, node: &DagNode) -> Result<NodeId> {
        let id = match node {
            DagNode::Content(c) => c.id,
            n => compute_node_id(n, self.algo)?,
        };
        if self.seen.insert(id) {
            self.writer.node(node, id)?;
        }
        Ok(id)
    }

    fn visit(&mut self, origin: &str, timestamp: i64, snapshot: NodeId) -> Result<()> {
        if self.origins.insert(origin.to_string()) {
            self.writer.origin(origin)?;
        }
        self.writer.visit(&Visit { origin: origin.to_string(), timestamp, snapshot })
    }
}

/// Runs `f` against a store inside one transaction.
pub fn into_store<R>(store: &Store, f: impl FnOnce(&mut dyn Sink) -> Result<R>) -> Result<R> {
    store.write(|w| f(&mut StoreSink::new(w)))
}

fn content(sink: &mut dyn Sink, bytes: Vec<u8>) -> Result<NodeId> {
    let algo = sink.algo();
    sink.node(&DagNode::Content(Content::from_bytes(bytes, algo)))
}

fn directory(sink: &mut dyn Sink, entries: Vec<DirectoryEntry>) -> Result<NodeId> {
    sink.node(&DagNode::Directory(Directory::new(entries)?))
}

fn revision(sink: &mut dyn Sink, root: NodeId, parents: Vec<NodeId>, t: i64, message: String) -> Result<NodeId> {
    let who = "Synthetic Developer <dev@example.org>";
    sink.node(&DagNode::Revision(Revision::simple(root, parents, who, t, &message)))
}

/// Ids of the three-revision toy corpus: A at t=100 with root D1{f1}, B at
/// t=200 and C at t=300 both with root D2{f1, f2}.
#[derive(Clone, Debug)]
pub struct Toy {
    pub f1: NodeId,
    pub f2: NodeId,
    pub d1: NodeId,
    pub d2: NodeId,
    pub a: NodeId,
    pub b: NodeId,
    pub c: NodeId,
}

pub fn toy(sink: &mut dyn Sink) -> Result<Toy> {
    let f1 = content(sink, b"first file\n".to_vec())?;
    let f2 = content(sink, b"second file\n".to_vec())?;
    let d1 = directory(sink, vec![DirectoryEntry::file("f1", f1)])?;
    let d2 = directory(sink, vec![DirectoryEntry::file("f1", f1), DirectoryEntry::file("f2", f2)])?;
    let a = revision(sink, d1, vec![], 100, "A\n".into())?;
    let b = revision(sink, d2, vec![a], 200, "B\n".into())?;
    let c = revision(sink, d2, vec![b], 300, "C\n".into())?;
    Ok(Toy { f1, f2, d1, d2, a, b, c })
}

#[derive(Clone, Debug)]
pub struct ExtremeCorpus {
    pub revisions: Vec<NodeId>,
    pub roots: Vec<NodeId>,
    pub contents: Vec<NodeId>,
}

/// `n` revisions with strictly increasing timestamps, all pointing at one
/// root directory holding `k` contents.
pub fn extreme_shared_root(sink: &mut dyn Sink, n: usize, k: usize, start: i64) -> Result<ExtremeCorpus> {
    let contents: Vec<NodeId> =
        (0..k).map(|i| content(sink, format!("shared content {i}\n").into_bytes())).collect::<Result<_>>()?;
    let root = directory(
        sink,
        contents.iter().enumerate().map(|(i, c)| DirectoryEntry::file(format!("f{i}"), *c)).collect(),
    )?;
    let mut revisions = Vec::with_capacity(n);
    for i in 0..n {
        let parents = revisions.last().copied().into_iter().collect();
        revisions.push(revision(sink, root, parents, start + i as i64, format!("revision {i}\n"))?);
    }
    Ok(ExtremeCorpus { revisions, roots: vec![root], contents })
}

/// `n` revisions over pairwise disjoint trees. With `nested`, each tree
/// puts its files under a private subdirectory.
pub fn extreme_disjoint(
    sink: &mut dyn Sink,
    n: usize,
    files_per_rev: usize,
    nested: bool,
    start: i64,
) -> Result<ExtremeCorpus> {
    let mut out = ExtremeCorpus { revisions: Vec::new(), roots: Vec::new(), contents: Vec::new() };
    for i in 0..n {
        let mut entries = Vec::new();
        for j in 0..files_per_rev {
            let c = content(sink, format!("revision {i} file {j}\n").into_bytes())?;
            out.contents.push(c);
            entries.push(DirectoryEntry::file(format!("f{j}"), c));
        }
        let root = if nested {
            let marker = content(sink, format!("tree {i}\n").into_bytes())?;
            out.contents.push(marker);
            let sub = directory(sink, entries)?;
            directory(sink, vec![DirectoryEntry::dir(format!("src{i}"), sub), DirectoryEntry::file("README", marker)])?
        } else {
            directory(sink, entries)?
        };
        out.roots.push(root);
        let parents = out.revisions.last().copied().into_iter().collect();
        out.revisions.push(revision(sink, root, parents, start + i as i64, format!("revision {i}\n"))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
