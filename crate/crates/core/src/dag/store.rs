use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::id::{NodeId, NodeKind};
use crate::storage::{decode_ts, encode_ts, KvRead, Keyspace, WriteView};

use super::manifest::{self, decode_body, encode_body};
use super::model::*;

/// Lightweight handle on a stored revision, as kept by the chronological
/// index: enough to drive provenance builders without decoding manifests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RevisionRef {
    pub timestamp: i64,
    pub id: NodeId,
    pub root: NodeId,
}

/// Half-open timestamp window `(after, until]`. `None` leaves a side open.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TimestampFilter {
    pub after: Option<i64>,
    pub until: Option<i64>,
}

impl TimestampFilter {
    pub const ALL: TimestampFilter = TimestampFilter { after: None, until: None };

    /// Excludes timestamps at or before the Unix epoch.
    pub fn after_epoch() -> TimestampFilter {
        TimestampFilter { after: Some(0), until: None }
    }

    pub fn until(mut self, cutoff: i64) -> TimestampFilter {
        self.until = Some(cutoff);
        self
    }

    pub fn accepts(&self, t: i64) -> bool {
        self.after.is_none_or(|a| t > a) && self.until.is_none_or(|u| t <= u)
    }
}

// Content values: presence flag, big-endian length, then optional bytes.
fn encode_content(c: &Content) -> Vec<u8> {
    let mut v = Vec::with_capacity(9 + c.data.as_ref().map_or(0, Vec::len));
    v.push(c.data.is_some() as u8);
    v.extend_from_slice(&c.length.to_be_bytes());
    if let Some(d) = &c.data {
        v.extend_from_slice(d);
    }
    v
}

fn decode_content(id: NodeId, v: &[u8]) -> Result<Content> {
    if v.len() < 9 {
        return Err(Error::Decode(format!("short content record for {id}")));
    }
    let length = u64::from_be_bytes(v[1..9].try_into().unwrap());
    let data = (v[0] == 1).then(|| v[9..].to_vec());
    Ok(Content { id, length, data })
}

fn rev_time_key(ts: i64, id: &NodeId) -> Vec<u8> {
    let mut k = Vec::with_capacity(8 + id.digest().len());
    k.extend_from_slice(&encode_ts(ts));
    k.extend_from_slice(id.digest());
    k
}

/// Node lookups available on any view of a store.
pub trait DagRead: KvRead {
    fn contains_node(&self, id: &NodeId) -> Result<bool> {
        self.contains(Keyspace::Nodes, &id.key())
    }

    fn get_node(&self, id: &NodeId) -> Result<DagNode> {
        let v = self
            .get(Keyspace::Nodes, &id.key())?
            .ok_or_else(|| Error::NotFound(id.to_string()))?;
        match id.kind() {
            NodeKind::Content => decode_content(*id, &v).map(DagNode::Content),
            kind => decode_body(kind, &v, self.algo()),
        }
    }

    fn get_directory(&self, id: &NodeId) -> Result<Directory> {
        let v = self
            .get(Keyspace::Nodes, &id.key())?
            .ok_or_else(|| Error::NotFound(id.to_string()))?;
        manifest::parse_directory(&v, self.algo())
    }

    fn get_revision(&self, id: &NodeId) -> Result<Revision> {
        match self.get_node(id)? {
            DagNode::Revision(r) => Ok(r),
            _ => Err(Error::NotFound(id.to_string())),
        }
    }

    fn content_length(&self, id: &NodeId) -> Result<u64> {
        let v = self
            .get(Keyspace::Nodes, &id.key())?
            .ok_or_else(|| Error::NotFound(id.to_string()))?;
        Ok(decode_content(*id, &v)?.length)
    }

    /// Revisions sorted by `(timestamp, id)`, restricted to `filter`.
    fn revision_refs<'a>(
        &'a self,
        filter: TimestampFilter,
    ) -> Result<Box<dyn Iterator<Item = Result<RevisionRef>> + 'a>> {
        self.revision_refs_after(filter, None)
    }

    /// Like [`DagRead::revision_refs`], resuming strictly after `resume`.
    fn revision_refs_after<'a>(
        &'a self,
        filter: TimestampFilter,
        resume: Option<&RevisionRef>,
    ) -> Result<Box<dyn Iterator<Item = Result<RevisionRef>> + 'a>> {
        let algo = self.algo();
        let start = match resume {
            Some(r) => Some(rev_time_key(r.timestamp, &r.id)),
            None => filter.after.map(|a| {
                let mut k = encode_ts(a).to_vec();
                k.extend(std::iter::repeat_n(0xff, algo.digest_len()));
                k
            }),
        };
        let scan = self.scan(Keyspace::RevTime, b"", start.as_deref())?;
        Ok(Box::new(
            scan.map(move |r| {
                let (k, v) = r?;
                let timestamp = decode_ts(&k)?;
                Ok(RevisionRef {
                    timestamp,
                    id: NodeId::from_bytes(NodeKind::Revision, &k[8..])?,
                    root: NodeId::from_bytes(NodeKind::Directory, &v)?,
                })
            })
            .filter(move |r| r.as_ref().map_or(true, |r| filter.after.is_none_or(|a| r.timestamp > a)))
            .take_while(move |r| r.as_ref().map_or(true, |r| filter.until.is_none_or(|u| r.timestamp <= u))),
        ))
    }

    /// Full revisions in chronological order.
    fn iter_revisions_chronological<'a>(
        &'a self,
        filter: TimestampFilter,
    ) -> Result<Box<dyn Iterator<Item = Result<(NodeId, Revision)>> + 'a>> {
        Ok(Box::new(self.revision_refs(filter)?.map(move |r| {
            let r = r?;
            Ok((r.id, self.get_revision(&r.id)?))
        })))
    }

    /// Looks up a revision's index entry.
    fn revision_ref(&self, id: &NodeId) -> Result<RevisionRef> {
        let rev = self.get_revision(id)?;
        Ok(RevisionRef { timestamp: rev.timestamp(), id: *id, root: rev.root })
    }

    /// Visit journal in insertion order.
    fn visits(&self) -> Result<Vec<Visit>> {
        self.scan(Keyspace::Visits, b"", None)?
            .map(|r| {
                let (_, v) = r?;
                Ok(serde_json::from_slice(&v)?)
            })
            .collect()
    }

    fn origins(&self) -> Result<Vec<Origin>> {
        self.scan(Keyspace::Origins, b"", None)?
            .map(|r| {
                let (k, _) = r?;
                Ok(Origin { url: String::from_utf8_lossy(&k).into_owned() })
            })
            .collect()
    }

    fn node_count(&self) -> Result<u64> {
        self.len(Keyspace::Nodes)
    }

    fn count_kind(&self, kind: NodeKind) -> Result<u64> {
        let mut n = 0;
        for r in self.scan(Keyspace::Nodes, &[kind.tag()], None)? {
            r?;
            n += 1;
        }
        Ok(n)
    }
}

impl<T: KvRead + ?Sized> DagRead for T {}

impl WriteView<'_> {
    /// Inserts `node` unless an identical node is stored. In strict mode
    /// every referenced node must already be present.
    pub fn insert_node(&mut self, node: &DagNode) -> Result<(NodeId, bool)> {
        node.check_shape()?;
        let algo = self.algo();
        let (id, value) = match node {
            DagNode::Content(c) => {
                if let Some(d) = &c.data {
                    let computed = manifest::content_id(d, algo);
                    if computed != c.id || d.len() as u64 != c.length {
                        return Err(Error::InvalidNode(format!(
                            "content {} does not match its bytes ({computed})",
                            c.id
                        )));
                    }
                }
                (c.id, encode_content(c))
            }
            other => {
                let body = encode_body(other)?;
                (manifest::hash_body(other.kind(), &body, algo), body)
            }
        };
        if id.digest().len() != algo.digest_len() {
            return Err(Error::InvalidNode(format!("{id} has the wrong digest length for {}", algo.name())));
        }
        let key = id.key();
        if self.contains(Keyspace::Nodes, &key)? {
            return Ok((id, false));
        }
        if !self.permissive() {
            for r in node.references() {
                if !self.contains(Keyspace::Nodes, &r.key())? {
                    return Err(Error::DanglingReference { from: id.to_string(), to: r });
                }
            }
        }
        self.put(Keyspace::Nodes, &key, &value)?;
        if let DagNode::Revision(r) = node {
            self.put(Keyspace::RevTime, &rev_time_key(r.timestamp(), &id), r.root.digest())?;
        }
        Ok((id, true))
    }

    /// Appends to the visit journal. The snapshot must be stored.
    pub fn record_visit(&mut self, origin_url: &str, timestamp: i64, snapshot: NodeId) -> Result<Visit> {
        if snapshot.kind() != NodeKind::Snapshot || !self.contains_node(&snapshot)? {
            return Err(Error::NotFound(snapshot.to_string()));
        }
        let seq = self.len(Keyspace::Visits)?;
        let visit = Visit { origin: origin_url.to_string(), timestamp, snapshot };
        self.put(Keyspace::Visits, &seq.to_be_bytes(), &serde_json::to_vec(&visit)?)?;
        self.put(Keyspace::VisitIndex, &visit_index_key(&visit), &seq.to_be_bytes())?;
        self.put_new(Keyspace::Origins, origin_url.as_bytes(), b"")?;
        Ok(visit)
    }

    pub fn add_origin(&mut self, url: &str) -> Result<bool> {
        self.put_new(Keyspace::Origins, url.as_bytes(), b"")
    }

    pub fn has_visit(&self, visit: &Visit) -> Result<bool> {
        self.contains(Keyspace::VisitIndex, &visit_index_key(visit))
    }
}

fn visit_index_key(v: &Visit) -> Vec<u8> {
    let mut k = v.origin.as_bytes().to_vec();
    k.push(0);
    k.extend_from_slice(&encode_ts(v.timestamp));
    k.extend_from_slice(&v.snapshot.key());
    k
}

/// Problems found by [`validate_dag`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "finding", rename_all = "kebab-case")]
pub enum Finding {
    Dangling { from: NodeId, to: NodeId },
    HashMismatch { id: NodeId, computed: NodeId },
    Undecodable { id: NodeId, error: String },
    DirectoryCycle { through: NodeId },
    RevisionCycle { through: NodeId },
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub nodes_checked: u64,
    pub contents_without_data: u64,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

fn check_node(algo: crate::id::HashAlgo, key: &[u8], value: &[u8]) -> (NodeId, Result<Option<DagNode>>, Option<Finding>) {
    let id = match NodeId::from_key(key) {
        Ok(id) => id,
        Err(e) => {
            let fake = NodeId::new(NodeKind::Content, algo.hash(&[key]));
            return (fake, Err(e), None);
        }
    };
    if id.kind() == NodeKind::Content {
        let c = match decode_content(id, value) {
            Ok(c) => c,
            Err(e) => return (id, Err(e), None),
        };
        let finding = c.data.as_ref().and_then(|d| {
            let computed = manifest::content_id(d, algo);
            (computed != id).then_some(Finding::HashMismatch { id, computed })
        });
        return (id, Ok(Some(DagNode::Content(c))), finding);
    }
    let computed = manifest::hash_body(id.kind(), value, algo);
    let finding = (computed != id).then_some(Finding::HashMismatch { id, computed });
    match decode_body(id.kind(), value, algo) {
        Ok(n) => (id, Ok(Some(n)), finding),
        Err(e) => (id, Err(e), finding),
    }
}

/// Re-hashes every node, reports dangling references and checks that the
/// directory and revision-parent subgraphs are acyclic. Rehashing runs on
/// the current rayon pool.
pub fn validate_dag<R: KvRead + Sync>(view: &R) -> Result<ValidationReport> {
    use rayon::prelude::*;

    let algo = view.algo();
    let mut report = ValidationReport::default();
    let mut dir_edges: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    let mut parent_edges: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    let mut all_refs: Vec<(NodeId, NodeId)> = Vec::new();

    let mut chunk: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    let mut scan = view.scan(Keyspace::Nodes, b"", None)?;
    loop {
        chunk.clear();
        for r in scan.by_ref().take(4096) {
            chunk.push(r?);
        }
        if chunk.is_empty() {
            break;
        }
        let checked: Vec<_> = chunk.par_iter().map(|(k, v)| check_node(algo, k, v)).collect();
        for (id, node, finding) in checked {
            report.nodes_checked += 1;
            report.findings.extend(finding);
            match node {
                Err(e) => report.findings.push(Finding::Undecodable { id, error: e.to_string() }),
                Ok(Some(DagNode::Content(c))) => {
                    if c.data.is_none() {
                        report.contents_without_data += 1;
                    }
                }
                Ok(Some(n)) => {
                    for r in n.references() {
                        all_refs.push((id, r));
                    }
                    match &n {
                        DagNode::Directory(d) => {
                            dir_edges.insert(
                                id,
                                d.entries()
                                    .iter()
                                    .filter(|e| e.target.kind() == NodeKind::Directory)
                                    .map(|e| e.target)
                                    .collect(),
                            );
                        }
                        DagNode::Revision(r) => {
                            parent_edges.insert(id, r.parents.clone());
                        }
                        _ => {}
                    }
                }
                Ok(None) => {}
            }
        }
    }
    drop(scan);

    for (from, to) in all_refs {
        if !view.contains(Keyspace::Nodes, &to.key())? {
            report.findings.push(Finding::Dangling { from, to });
        }
    }
    for through in find_cycles(&dir_edges) {
        report.findings.push(Finding::DirectoryCycle { through });
    }
    for through in find_cycles(&parent_edges) {
        report.findings.push(Finding::RevisionCycle { through });
    }
    Ok(report)
}

/// Iterative three-color DFS; returns one node per back edge found.
fn find_cycles(edges: &HashMap<NodeId, Vec<NodeId>>) -> Vec<NodeId> {
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        Grey,
        Black,
    }
    let mut color: HashMap<NodeId, Color> = HashMap::new();
    let mut found = Vec::new();
    let mut starts: Vec<&NodeId> = edges.keys().collect();
    starts.sort();
    for &start in starts {
        if color.contains_key(&start) {
            continue;
        }
        let mut stack: Vec<(NodeId, usize)> = vec![(start, 0)];
        color.insert(start, Color::Grey);
        while let Some((node, idx)) = stack.last_mut() {
            let children = edges.get(node).map(Vec::as_slice).unwrap_or(&[]);
            if *idx < children.len() {
                let child = children[*idx];
                *idx += 1;
                match color.get(&child) {
                    Some(Color::Grey) => found.push(child),
                    Some(Color::Black) => {}
                    None => {
                        color.insert(child, Color::Grey);
                        stack.push((child, 0));
                    }
                }
            } else {
                color.insert(*node, Color::Black);
                stack.pop();
            }
        }
    }
    found
}

/// Set of node ids present, used by tests and exports.
pub fn node_ids<R: KvRead + ?Sized>(view: &R) -> Result<HashSet<NodeId>> {
    view.scan(Keyspace::Nodes, b"", None)?
        .map(|r| NodeId::from_key(&r?.0))
        .collect()
}
