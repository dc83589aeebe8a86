use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use super::mult::{Histogram, Sample};
use crate::dag::manifest::decode_body;
use crate::dag::{DagNode, DagRead};
use crate::error::{Error, Result};
use crate::id::{NodeId, NodeKind};
use crate::storage::{KvRead, Keyspace};

/// Deletes every whitespace byte, then trailing `;` bytes. Empty results
/// are dropped; length windows are left to callers.
pub fn normalize_sloc(line: &[u8]) -> Option<Vec<u8>> {
    let mut out: Vec<u8> = line.iter().copied().filter(|b| !b.is_ascii_whitespace()).collect();
    while out.last() == Some(&b';') {
        out.pop();
    }
    (!out.is_empty()).then_some(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SlocSample {
    /// Name suffixes such as `.c`; a content qualifies if it was ever
    /// recorded under a matching name. Empty accepts every content.
    pub extensions: Vec<String>,
    #[serde(flatten)]
    pub sample: Sample,
    /// Normalized line lengths kept, inclusive.
    pub lengths: (usize, usize),
}

impl Default for SlocSample {
    fn default() -> Self {
        SlocSample { extensions: Vec::new(), sample: Sample::default(), lengths: (4, 1000) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SlocReport {
    pub contents: u64,
    /// Sampled contents skipped for lack of data bytes.
    pub without_data: u64,
    /// Distinct contents per normalized line → number of lines.
    pub histogram: Histogram,
    /// Normalized length → number of distinct lines.
    pub lengths: BTreeMap<usize, u64>,
}

fn candidates<V: KvRead + ?Sized>(view: &V, extensions: &[String]) -> Result<BTreeSet<NodeId>> {
    let mut out = BTreeSet::new();
    if extensions.is_empty() {
        for kv in view.scan(Keyspace::Nodes, &[NodeKind::Content.tag()], None)? {
            out.insert(NodeId::from_key(&kv?.0)?);
        }
        return Ok(out);
    }
    for kv in view.scan(Keyspace::Nodes, &[NodeKind::Directory.tag()], None)? {
        let (_, v) = kv?;
        let DagNode::Directory(d) = decode_body(NodeKind::Directory, &v, view.algo())? else { continue };
        for e in d.entries() {
            if e.target.kind() == NodeKind::Content && extensions.iter().any(|x| e.name.ends_with(x.as_bytes())) {
                out.insert(e.target);
            }
        }
    }
    Ok(out)
}

fn distinct_lines(data: &[u8], (lo, hi): (usize, usize)) -> HashSet<Vec<u8>> {
    data.split(|&b| b == b'\n').filter_map(normalize_sloc).filter(|l| (lo..=hi).contains(&l.len())).collect()
}

/// Counts, for each normalized line, the distinct sampled contents holding
/// it.
pub fn sloc_multiplication<V: KvRead + ?Sized>(view: &V, opts: &SlocSample) -> Result<SlocReport> {
    let ids: Vec<NodeId> = candidates(view, &opts.extensions)?.into_iter().filter(|c| opts.sample.matches_id(c)).collect();
    let mut counts: HashMap<Vec<u8>, u64> = HashMap::new();
    let mut report =
        SlocReport { contents: 0, without_data: 0, histogram: Histogram::default(), lengths: BTreeMap::new() };
    for chunk in ids.chunks(1024) {
        let mut bodies = Vec::with_capacity(chunk.len());
        for id in chunk {
            let DagNode::Content(c) = view.get_node(id)? else { continue };
            if !opts.sample.matches_size(c.length) {
                continue;
            }
            match c.data {
                Some(d) => bodies.push(d),
                None => report.without_data += 1,
            }
        }
        report.contents += bodies.len() as u64;
        let sets: Vec<HashSet<Vec<u8>>> = bodies.par_iter().map(|d| distinct_lines(d, opts.lengths)).collect();
        for set in sets {
            for line in set {
                *counts.entry(line).or_default() += 1;
            }
        }
    }
    if report.contents == 0 {
        return Err(Error::NoContentData);
    }
    for (line, k) in counts {
        report.histogram.add(k, 1);
        *report.lengths.entry(line.len()).or_default() += 1;
    }
    Ok(report)
}
