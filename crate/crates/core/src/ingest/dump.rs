//! Line-delimited JSON dump format.
//!
//! Each line is one object with a `type` field (`content`, `directory`,
//! `revision`, `release`, `snapshot`, `origin`, `visit`). Ids are written as
//! `kind:hex`; content bytes are base64 in `data` and may be omitted. Byte
//! strings that are not UTF-8 are written as `{"base64": "..."}`. A dump is
//! topological: a record may only reference nodes defined above it or
//! already stored.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::IngestStats;
use crate::dag::{
    compute_node_id, Content, DagNode, DagRead, Directory, DirectoryEntry, Release, Revision, Snapshot, Timestamp, Visit,
};
use crate::error::{Error, Result};
use crate::id::{NodeId, NodeKind};
use crate::storage::{KvRead, Keyspace, Store};

const LINES_PER_COMMIT: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Eq)]
struct Bytes(Vec<u8>);

impl Serialize for Bytes {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match std::str::from_utf8(&self.0) {
            Ok(text) => s.serialize_str(text),
            Err(_) => {
                use serde::ser::SerializeMap;
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("base64", &B64.encode(&self.0))?;
                m.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Bytes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Bytes, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Raw { base64: String },
        }
        match Repr::deserialize(d)? {
            Repr::Text(t) => Ok(Bytes(t.into_bytes())),
            Repr::Raw { base64 } => B64.decode(base64).map(Bytes).map_err(D::Error::custom),
        }
    }
}

fn octal<S: Serializer>(v: &u32, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:o}"))
}

fn from_octal<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u32, D::Error> {
    let s = String::deserialize(d)?;
    u32::from_str_radix(&s, 8).map_err(D::Error::custom)
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    name: Bytes,
    target: NodeId,
    #[serde(serialize_with = "octal", deserialize_with = "from_octal")]
    perms: u32,
}

#[derive(Serialize, Deserialize)]
struct BranchRecord {
    name: Bytes,
    target: NodeId,
}

#[derive(Serialize, Deserialize)]
struct Person {
    name: Bytes,
    date: Timestamp,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Content {
        id: NodeId,
        length: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<String>,
    },
    Directory {
        #[serde(default)]
        id: Option<NodeId>,
        entries: Vec<EntryRecord>,
    },
    Revision {
        #[serde(default)]
        id: Option<NodeId>,
        root: NodeId,
        #[serde(default)]
        parents: Vec<NodeId>,
        author: Bytes,
        author_date: Timestamp,
        committer: Bytes,
        committer_date: Timestamp,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        extra_headers: Vec<(Bytes, Bytes)>,
        message: Bytes,
    },
    Release {
        #[serde(default)]
        id: Option<NodeId>,
        target: NodeId,
        name: Bytes,
        #[serde(default)]
        author: Option<Person>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        extra_headers: Vec<(Bytes, Bytes)>,
        message: Bytes,
    },
    Snapshot {
        #[serde(default)]
        id: Option<NodeId>,
        branches: Vec<BranchRecord>,
    },
    Origin {
        url: String,
    },
    Visit {
        origin: String,
        timestamp: i64,
        snapshot: NodeId,
    },
}

fn headers_out(h: &[(Vec<u8>, Vec<u8>)]) -> Vec<(Bytes, Bytes)> {
    h.iter().map(|(k, v)| (Bytes(k.clone()), Bytes(v.clone()))).collect()
}

fn headers_in(h: Vec<(Bytes, Bytes)>) -> Vec<(Vec<u8>, Vec<u8>)> {
    h.into_iter().map(|(k, v)| (k.0, v.0)).collect()
}

impl Record {
    fn from_node(node: &DagNode, id: NodeId) -> Record {
        match node {
            DagNode::Content(c) => Record::Content {
                id,
                length: c.length,
                data: c.data.as_ref().map(|d| B64.encode(d)),
            },
            DagNode::Directory(d) => Record::Directory {
                id: Some(id),
                entries: d
                    .entries()
                    .iter()
                    .map(|e| EntryRecord { name: Bytes(e.name.clone()), target: e.target, perms: e.perms })
                    .collect(),
            },
            DagNode::Revision(r) => Record::Revision {
                id: Some(id),
                root: r.root,
                parents: r.parents.clone(),
                author: Bytes(r.author.clone()),
                author_date: r.author_date,
                committer: Bytes(r.committer.clone()),
                committer_date: r.committer_date,
                extra_headers: headers_out(&r.extra_headers),
                message: Bytes(r.message.clone()),
            },
            DagNode::Release(r) => Record::Release {
                id: Some(id),
                target: r.target,
                name: Bytes(r.name.clone()),
                author: r.author.as_ref().map(|(n, d)| Person { name: Bytes(n.clone()), date: *d }),
                extra_headers: headers_out(&r.extra_headers),
                message: Bytes(r.message.clone()),
            },
            DagNode::Snapshot(s) => Record::Snapshot {
                id: Some(id),
                branches: s
                    .branches
                    .iter()
                    .map(|(n, t)| BranchRecord { name: Bytes(n.clone()), target: *t })
                    .collect(),
            },
        }
    }

    /// Node and the id claimed by the record, if any.
    fn into_node(self) -> Result<Option<(DagNode, Option<NodeId>)>> {
        Ok(Some(match self {
            Record::Content { id, length, data } => {
                let data = data.map(|d| B64.decode(d)).transpose().map_err(|e| Error::Decode(e.to_string()))?;
                (DagNode::Content(Content { id, length, data }), Some(id))
            }
            Record::Directory { id, entries } => {
                let entries = entries
                    .into_iter()
                    .map(|e| DirectoryEntry { name: e.name.0, target: e.target, perms: e.perms })
                    .collect();
                (DagNode::Directory(Directory::new(entries)?), id)
            }
            Record::Revision { id, root, parents, author, author_date, committer, committer_date, extra_headers, message } => (
                DagNode::Revision(Revision {
                    root,
                    parents,
                    author: author.0,
                    author_date,
                    committer: committer.0,
                    committer_date,
                    extra_headers: headers_in(extra_headers),
                    message: message.0,
                }),
                id,
            ),
            Record::Release { id, target, name, author, extra_headers, message } => (
                DagNode::Release(Release {
                    target,
                    name: name.0,
                    author: author.map(|p| (p.name.0, p.date)),
                    extra_headers: headers_in(extra_headers),
                    message: message.0,
                }),
                id,
            ),
            Record::Snapshot { id, branches } => (
                DagNode::Snapshot(Snapshot { branches: branches.into_iter().map(|b| (b.name.0, b.target)).collect() }),
                id,
            ),
            Record::Origin { .. } | Record::Visit { .. } => return Ok(None),
        }))
    }
}

/// Writes dump records.
pub struct DumpWriter<W: Write> {
    out: W,
    records: u64,
}

impl<W: Write> DumpWriter<W> {
    pub fn new(out: W) -> Self {
        DumpWriter { out, records: 0 }
    }

    fn write(&mut self, r: &Record) -> Result<()> {
        serde_json::to_writer(&mut self.out, r)?;
        self.out.write_all(b"\n")?;
        self.records += 1;
        Ok(())
    }

    pub fn node(&mut self, node: &DagNode, id: NodeId) -> Result<()> {
        self.write(&Record::from_node(node, id))
    }

    pub fn origin(&mut self, url: &str) -> Result<()> {
        self.write(&Record::Origin { url: url.to_string() })
    }

    pub fn visit(&mut self, v: &Visit) -> Result<()> {
        self.write(&Record::Visit { origin: v.origin.clone(), timestamp: v.timestamp, snapshot: v.snapshot })
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Opens a dump file; `-` is standard input, `.gz` files are decompressed.
pub fn open_dump(path: &Path) -> Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(std::io::stdin())));
    }
    let f = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
        _ => Error::Io(e),
    })?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(flate2::read::MultiGzDecoder::new(f))))
    } else {
        Ok(Box::new(BufReader::new(f)))
    }
}

/// Loads a topological dump. Batches are committed as they complete, so a
/// failed load can simply be re-run.
pub fn load_dump<R: BufRead>(store: &Store, mut reader: R) -> Result<IngestStats> {
    let mut stats = IngestStats::default();
    let mut line_no = 0usize;
    let mut buf = String::new();
    let mut eof = false;
    while !eof {
        store.write(|w| {
            for _ in 0..LINES_PER_COMMIT {
                buf.clear();
                if reader.read_line(&mut buf)? == 0 {
                    eof = true;
                    break;
                }
                line_no += 1;
                let text = buf.trim_end_matches(['\n', '\r']);
                if text.trim().is_empty() {
                    continue;
                }
                let parse = |message: String| Error::Parse { line: line_no, message };
                let record: Record = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
                match record {
                    Record::Origin { url } => {
                        if w.add_origin(&url)? {
                            stats.origins_added += 1;
                        }
                    }
                    Record::Visit { origin, timestamp, snapshot } => {
                        let v = Visit { origin, timestamp, snapshot };
                        if w.has_visit(&v)? {
                            stats.visits_duplicate += 1;
                        } else {
                            w.record_visit(&v.origin, v.timestamp, v.snapshot).map_err(|e| match e {
                                Error::NotFound(_) => Error::DanglingAtLine { line: line_no, to: snapshot },
                                e => e,
                            })?;
                            stats.visits_added += 1;
                        }
                    }
                    other => {
                        let (node, claimed) = other.into_node().map_err(|e| parse(e.to_string()))?.expect("node record");
                        if node.kind() != NodeKind::Content {
                            let computed = compute_node_id(&node, w.algo())?;
                            if let Some(c) = claimed.filter(|c| *c != computed) {
                                return Err(parse(format!("id {c} does not match computed {computed}")));
                            }
                        }
                        let (_, inserted) = w.insert_node(&node).map_err(|e| match e {
                            Error::DanglingReference { to, .. } => Error::DanglingAtLine { line: line_no, to },
                            Error::InvalidNode(m) | Error::InvalidEntryName(m) => parse(m),
                            e => e,
                        })?;
                        stats.record(node.kind(), inserted);
                    }
                }
            }
            Ok(())
        })?;
    }
    Ok(stats)
}

/// Writes the whole store as a topological dump.
pub fn export_dump<V: KvRead + ?Sized, W: Write>(view: &V, out: &mut DumpWriter<W>) -> Result<()> {
    for kind in [NodeKind::Content, NodeKind::Directory, NodeKind::Revision, NodeKind::Release, NodeKind::Snapshot] {
        let ids: Vec<NodeId> = view
            .scan(Keyspace::Nodes, &[kind.tag()], None)?
            .map(|r| NodeId::from_key(&r?.0))
            .collect::<Result<_>>()?;
        match kind {
            NodeKind::Directory | NodeKind::Revision => {
                let mut done: HashSet<NodeId> = HashSet::new();
                for id in &ids {
                    post_order(view, *id, &mut done, out)?;
                }
            }
            _ => {
                for id in ids {
                    out.node(&view.get_node(&id)?, id)?;
                }
            }
        }
    }
    for o in view.origins()? {
        out.origin(&o.url)?;
    }
    for v in view.visits()? {
        out.visit(&v)?;
    }
    Ok(())
}

/// Emits `start` after every same-kind node it references.
fn post_order<V: KvRead + ?Sized, W: Write>(
    view: &V,
    start: NodeId,
    done: &mut HashSet<NodeId>,
    out: &mut DumpWriter<W>,
) -> Result<()> {
    if done.contains(&start) {
        return Ok(());
    }
    let mut stack: Vec<(NodeId, DagNode, bool)> = vec![(start, view.get_node(&start)?, false)];
    while let Some((id, node, expanded)) = stack.pop() {
        if done.contains(&id) {
            continue;
        }
        if expanded {
            out.node(&node, id)?;
            done.insert(id);
            continue;
        }
        let children: Vec<NodeId> = node
            .references()
            .into_iter()
            .filter(|r| r.kind() == id.kind() && !done.contains(r) && view.contains_node(r).unwrap_or(false))
            .collect();
        stack.push((id, node, true));
        for c in children {
            let n = view.get_node(&c)?;
            stack.push((c, n, false));
        }
    }
    Ok(())
}
