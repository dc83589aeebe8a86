use std::collections::HashSet;

use super::{Model, ModelState};
use crate::error::{Error, Result};
use crate::id::{NodeId, NodeKind};
use crate::isochrone::{join_path, ClockRead, StoredClock};
use crate::storage::{decode_ts, encode_ts, KvPair, KvRead, Keyspace};

/// One occurrence of a content in a revision. Field order gives the
/// first-occurrence ordering: timestamp, then revision id, then path.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occurrence {
    pub content: NodeId,
    pub timestamp: i64,
    pub revision: NodeId,
    pub path: Vec<u8>,
}

impl Occurrence {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.content,
            self.revision,
            self.timestamp,
            String::from_utf8_lossy(&self.path)
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "content": self.content.to_string(),
            "revision": self.revision.to_string(),
            "timestamp": self.timestamp,
            "path": String::from_utf8_lossy(&self.path),
        })
    }
}

type Stream<'a> = Box<dyn Iterator<Item = Result<Occurrence>> + 'a>;

fn digest_at(k: &[u8], at: usize, len: usize, kind: NodeKind) -> Result<NodeId> {
    k.get(at..at + len)
        .ok_or_else(|| Error::Decode("short index key".into()))
        .and_then(|d| NodeId::from_bytes(kind, d))
}

/// Decodes `x ‖ ts ‖ rev ‖ path`.
fn decode_timed(k: &[u8], len: usize) -> Result<(i64, NodeId, Vec<u8>)> {
    let ts = decode_ts(k.get(len..).unwrap_or_default())?;
    let rev = digest_at(k, len + 8, len, NodeKind::Revision)?;
    Ok((ts, rev, k[2 * len + 8..].to_vec()))
}

fn occurrence_from_timed(content: NodeId, kv: Result<KvPair>, len: usize) -> Result<Occurrence> {
    let (k, _) = kv?;
    let (timestamp, revision, path) = decode_timed(&k, len)?;
    Ok(Occurrence { content, timestamp, revision, path })
}

fn known_content<V: KvRead + ?Sized>(view: &V, model: Model, content: &NodeId) -> Result<i64> {
    ModelState::require(view, model)?;
    if content.kind() != NodeKind::Content {
        return Err(Error::NotFound(content.to_string()));
    }
    StoredClock::new(view, model.clock())
        .timestamp(content)?
        .ok_or_else(|| Error::NotFound(content.to_string()))
}

/// Earliest occurrence of `content`, ties broken by revision id then path.
pub fn first_occurrence<V: KvRead + ?Sized>(view: &V, model: Model, content: &NodeId) -> Result<Occurrence> {
    let t_c = known_content(view, model, content)?;
    let len = view.algo().digest_len();
    match model {
        Model::Flat | Model::Compact => {
            let ks = if model == Model::Flat { Keyspace::Flat } else { Keyspace::CompactCer };
            let first = view
                .scan(ks, content.digest(), None)?
                .next()
                .ok_or_else(|| Error::NotFound(content.to_string()))?;
            occurrence_from_timed(*content, first, len)
        }
        Model::Recursive => recursive_first(view, content, t_c, len),
    }
}

/// Walks up through directories stamped `t_c`; only those can lead to a
/// revision at `t_c`.
fn recursive_first<V: KvRead + ?Sized>(view: &V, content: &NodeId, t_c: i64, len: usize) -> Result<Occurrence> {
    let clock = StoredClock::new(view, Keyspace::RecClock);
    let mut stack: Vec<(NodeId, Vec<u8>)> = Vec::new();
    let push_parents = |ks: Keyspace, child: &[u8], suffix: &[u8], stack: &mut Vec<(NodeId, Vec<u8>)>| -> Result<()> {
        for kv in view.scan(ks, child, None)? {
            let (k, _) = kv?;
            let parent = digest_at(&k, len, len, NodeKind::Directory)?;
            if clock.timestamp(&parent)? == Some(t_c) {
                let name = &k[2 * len..];
                let path = if suffix.is_empty() { name.to_vec() } else { join_path(name, suffix) };
                stack.push((parent, path));
            }
        }
        Ok(())
    };
    push_parents(Keyspace::RecCd, content.digest(), b"", &mut stack)?;
    let mut best: Option<(NodeId, Vec<u8>)> = None;
    while let Some((d, path)) = stack.pop() {
        let prefix = [d.digest(), &encode_ts(t_c)[..]].concat();
        for kv in view.scan(Keyspace::RecDr, &prefix, None)? {
            let (k, _) = kv?;
            let rev = digest_at(&k, len + 8, len, NodeKind::Revision)?;
            if best.as_ref().is_none_or(|(r, p)| (&rev, &path) < (r, p)) {
                best = Some((rev, path.clone()));
            }
        }
        push_parents(Keyspace::RecDd, d.digest(), &path, &mut stack)?;
    }
    let (revision, path) = best.ok_or_else(|| Error::NotFound(content.to_string()))?;
    Ok(Occurrence { content: *content, timestamp: t_c, revision, path })
}

/// Streams every occurrence of `content`. Nothing is materialized beyond
/// the compact model's early-occurrence set, used to drop duplicates.
pub fn all_occurrences<'a, V: KvRead + ?Sized>(view: &'a V, model: Model, content: &NodeId) -> Result<Stream<'a>> {
    known_content(view, model, content)?;
    let len = view.algo().digest_len();
    let c = *content;
    Ok(match model {
        Model::Flat => Box::new(view.scan(Keyspace::Flat, c.digest(), None)?.map(move |kv| occurrence_from_timed(c, kv, len))),
        Model::Compact => Box::new(CompactAll {
            view,
            content: c,
            len,
            early: Some(view.scan(Keyspace::CompactCer, c.digest(), None)?),
            seen: HashSet::new(),
            cod: None,
            dor: None,
        }),
        Model::Recursive => Box::new(RecursiveAll::new(view, c, len)?),
    })
}

type KvIter<'a> = Box<dyn Iterator<Item = Result<KvPair>> + 'a>;

struct CompactAll<'a, V: ?Sized> {
    view: &'a V,
    content: NodeId,
    len: usize,
    early: Option<KvIter<'a>>,
    seen: HashSet<(NodeId, Vec<u8>)>,
    cod: Option<KvIter<'a>>,
    /// Current frontier directory's path inside it, and its crossings.
    dor: Option<(Vec<u8>, KvIter<'a>)>,
}

impl<V: KvRead + ?Sized> CompactAll<'_, V> {
    fn step(&mut self) -> Result<Option<Occurrence>> {
        if let Some(early) = &mut self.early {
            match early.next() {
                Some(kv) => {
                    let o = occurrence_from_timed(self.content, kv, self.len)?;
                    self.seen.insert((o.revision, o.path.clone()));
                    return Ok(Some(o));
                }
                None => {
                    self.early = None;
                    self.cod = Some(self.view.scan(Keyspace::CompactCod, self.content.digest(), None)?);
                }
            }
        }
        loop {
            if let Some((inner, dor)) = &mut self.dor {
                match dor.next() {
                    Some(kv) => {
                        let (k, _) = kv?;
                        let (timestamp, revision, dir_path) = decode_timed(&k, self.len)?;
                        let path = join_path(&dir_path, inner);
                        if self.seen.contains(&(revision, path.clone())) {
                            continue;
                        }
                        return Ok(Some(Occurrence { content: self.content, timestamp, revision, path }));
                    }
                    None => self.dor = None,
                }
            }
            let Some(cod) = &mut self.cod else { return Ok(None) };
            match cod.next() {
                Some(kv) => {
                    let (k, _) = kv?;
                    let d = &k[self.len..2 * self.len];
                    let inner = k[2 * self.len..].to_vec();
                    self.dor = Some((inner, self.view.scan(Keyspace::CompactDor, d, None)?));
                }
                None => {
                    self.cod = None;
                    return Ok(None);
                }
            }
        }
    }
}

impl<V: KvRead + ?Sized> Iterator for CompactAll<'_, V> {
    type Item = Result<Occurrence>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.step() {
            Ok(o) => o.map(Ok),
            Err(e) => {
                self.early = None;
                self.cod = None;
                self.dor = None;
                Some(Err(e))
            }
        }
    }
}

enum Step {
    Emit(i64, NodeId),
    Up(NodeId, Vec<u8>),
}

struct Frame<'a> {
    suffix: Vec<u8>,
    steps: Box<dyn Iterator<Item = Result<Step>> + 'a>,
}

/// Upward depth-first walk from a content to every revision root.
struct RecursiveAll<'a, V: ?Sized> {
    view: &'a V,
    content: NodeId,
    len: usize,
    stack: Vec<Frame<'a>>,
}

impl<'a, V: KvRead + ?Sized> RecursiveAll<'a, V> {
    fn new(view: &'a V, content: NodeId, len: usize) -> Result<Self> {
        let steps = view.scan(Keyspace::RecCd, content.digest(), None)?.map(move |kv| {
            let (k, _) = kv?;
            Ok(Step::Up(digest_at(&k, len, len, NodeKind::Directory)?, k[2 * len..].to_vec()))
        });
        Ok(RecursiveAll { view, content, len, stack: vec![Frame { suffix: Vec::new(), steps: Box::new(steps) }] })
    }

    fn frame(&self, dir: &NodeId, suffix: Vec<u8>) -> Result<Frame<'a>> {
        let len = self.len;
        let roots = self.view.scan(Keyspace::RecDr, dir.digest(), None)?.map(move |kv| {
            let (k, _) = kv?;
            Ok(Step::Emit(decode_ts(&k[len..])?, digest_at(&k, len + 8, len, NodeKind::Revision)?))
        });
        let parents = self.view.scan(Keyspace::RecDd, dir.digest(), None)?.map(move |kv| {
            let (k, _) = kv?;
            Ok(Step::Up(digest_at(&k, len, len, NodeKind::Directory)?, k[2 * len..].to_vec()))
        });
        Ok(Frame { suffix, steps: Box::new(roots.chain(parents)) })
    }

    fn step(&mut self) -> Result<Option<Occurrence>> {
        loop {
            let Some(top) = self.stack.last_mut() else { return Ok(None) };
            match top.steps.next() {
                None => {
                    self.stack.pop();
                }
                Some(step) => match step? {
                    Step::Emit(timestamp, revision) => {
                        return Ok(Some(Occurrence {
                            content: self.content,
                            timestamp,
                            revision,
                            path: top.suffix.clone(),
                        }))
                    }
                    Step::Up(dir, name) => {
                        let suffix = if top.suffix.is_empty() { name } else { join_path(&name, &top.suffix) };
                        let f = self.frame(&dir, suffix)?;
                        self.stack.push(f);
                    }
                },
            }
        }
    }
}

impl<V: KvRead + ?Sized> Iterator for RecursiveAll<'_, V> {
    type Item = Result<Occurrence>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.step() {
            Ok(o) => o.map(Ok),
            Err(e) => {
                self.stack.clear();
                Some(Err(e))
            }
        }
    }
}
