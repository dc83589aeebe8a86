use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::id::{HashAlgo, NodeId, NodeKind};

pub const MODE_FILE: u32 = 0o100644;
pub const MODE_EXEC: u32 = 0o100755;
pub const MODE_SYMLINK: u32 = 0o120000;
pub const MODE_DIR: u32 = 0o040000;
pub const MODE_SUBMODULE: u32 = 0o160000;

/// Seconds since the Unix epoch plus the recorded UTC offset. Ordering
/// always uses the UTC seconds alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub seconds: i64,
    pub offset_minutes: i16,
}

impl Timestamp {
    pub fn utc(seconds: i64) -> Timestamp {
        Timestamp { seconds, offset_minutes: 0 }
    }
}

/// Raw file content. `data` may be absent for metadata-only corpora, in
/// which case the id is taken on trust.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Content {
    pub id: NodeId,
    pub length: u64,
    pub data: Option<Vec<u8>>,
}

impl Content {
    pub fn from_bytes(data: Vec<u8>, algo: HashAlgo) -> Content {
        let id = super::manifest::content_id(&data, algo);
        Content { id, length: data.len() as u64, data: Some(data) }
    }

    pub fn metadata_only(id: NodeId, length: u64) -> Content {
        Content { id, length, data: None }
    }

    pub fn without_data(&self) -> Content {
        Content { id: self.id, length: self.length, data: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DirectoryEntry {
    pub name: Vec<u8>,
    pub target: NodeId,
    pub perms: u32,
}

impl DirectoryEntry {
    pub fn file(name: impl Into<Vec<u8>>, target: NodeId) -> DirectoryEntry {
        DirectoryEntry { name: name.into(), target, perms: MODE_FILE }
    }

    pub fn dir(name: impl Into<Vec<u8>>, target: NodeId) -> DirectoryEntry {
        DirectoryEntry { name: name.into(), target, perms: MODE_DIR }
    }

    pub fn target_kind(&self) -> NodeKind {
        self.target.kind()
    }

    /// Key used for canonical manifest ordering: directories sort as if
    /// their name carried a trailing slash.
    fn sort_key(&self) -> Vec<u8> {
        let mut k = self.name.clone();
        if self.target.kind() == NodeKind::Directory {
            k.push(b'/');
        }
        k
    }
}

/// A named, canonically ordered list of entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Directory {
    entries: Vec<DirectoryEntry>,
}

impl Directory {
    /// Validates entry names and sorts entries into manifest order.
    pub fn new(mut entries: Vec<DirectoryEntry>) -> Result<Directory> {
        for e in &entries {
            if e.name.is_empty() || e.name.contains(&b'/') || e.name.contains(&0) {
                return Err(Error::InvalidEntryName(String::from_utf8_lossy(&e.name).into_owned()));
            }
            let mode_kind = match e.perms {
                MODE_DIR => NodeKind::Directory,
                MODE_SUBMODULE => NodeKind::Revision,
                _ => NodeKind::Content,
            };
            if mode_kind != e.target.kind() {
                return Err(Error::InvalidNode(format!(
                    "entry {:?} has mode {:o} but targets a {}",
                    String::from_utf8_lossy(&e.name),
                    e.perms,
                    e.target.kind()
                )));
            }
        }
        entries.sort_by_cached_key(DirectoryEntry::sort_key);
        for pair in entries.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(Error::InvalidEntryName(format!(
                    "duplicate entry {}",
                    String::from_utf8_lossy(&pair[0].name)
                )));
            }
        }
        Ok(Directory { entries })
    }

    pub fn entries(&self) -> &[DirectoryEntry] {
        &self.entries
    }

    pub fn empty() -> Directory {
        Directory { entries: Vec::new() }
    }
}

/// A point-in-time state of a development history. The committer date is
/// the revision timestamp used by every provenance computation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Revision {
    pub root: NodeId,
    pub parents: Vec<NodeId>,
    pub author: Vec<u8>,
    pub author_date: Timestamp,
    pub committer: Vec<u8>,
    pub committer_date: Timestamp,
    /// Additional headers (e.g. `gpgsig`) in manifest order.
    pub extra_headers: Vec<(Vec<u8>, Vec<u8>)>,
    pub message: Vec<u8>,
}

impl Revision {
    /// Convenience constructor with identical author and committer.
    pub fn simple(root: NodeId, parents: Vec<NodeId>, who: &str, seconds: i64, message: &str) -> Revision {
        Revision {
            root,
            parents,
            author: who.as_bytes().to_vec(),
            author_date: Timestamp::utc(seconds),
            committer: who.as_bytes().to_vec(),
            committer_date: Timestamp::utc(seconds),
            extra_headers: Vec::new(),
            message: message.as_bytes().to_vec(),
        }
    }

    pub fn timestamp(&self) -> i64 {
        self.committer_date.seconds
    }
}

/// A revision marked as noteworthy (annotated tag).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Release {
    pub target: NodeId,
    pub name: Vec<u8>,
    pub author: Option<(Vec<u8>, Timestamp)>,
    pub extra_headers: Vec<(Vec<u8>, Vec<u8>)>,
    pub message: Vec<u8>,
}

/// Full branch state of a repository at a visit.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Snapshot {
    pub branches: BTreeMap<Vec<u8>, NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DagNode {
    Content(Content),
    Directory(Directory),
    Revision(Revision),
    Release(Release),
    Snapshot(Snapshot),
}

impl DagNode {
    pub fn kind(&self) -> NodeKind {
        match self {
            DagNode::Content(_) => NodeKind::Content,
            DagNode::Directory(_) => NodeKind::Directory,
            DagNode::Revision(_) => NodeKind::Revision,
            DagNode::Release(_) => NodeKind::Release,
            DagNode::Snapshot(_) => NodeKind::Snapshot,
        }
    }

    /// Ids this node points at, excluding submodule-style revision entries
    /// of directories (those reference external histories).
    pub fn references(&self) -> Vec<NodeId> {
        match self {
            DagNode::Content(_) => Vec::new(),
            DagNode::Directory(d) => d
                .entries()
                .iter()
                .filter(|e| e.target.kind() != NodeKind::Revision)
                .map(|e| e.target)
                .collect(),
            DagNode::Revision(r) => std::iter::once(r.root).chain(r.parents.iter().copied()).collect(),
            DagNode::Release(r) => vec![r.target],
            DagNode::Snapshot(s) => s.branches.values().copied().collect(),
        }
    }

    /// Checks the kind constraints on referenced ids.
    pub fn check_shape(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidNode(what));
        match self {
            DagNode::Revision(r) => {
                if r.root.kind() != NodeKind::Directory {
                    return bad(format!("revision root {} is not a directory", r.root));
                }
                if let Some(p) = r.parents.iter().find(|p| p.kind() != NodeKind::Revision) {
                    return bad(format!("revision parent {p} is not a revision"));
                }
            }
            DagNode::Release(r) if r.target.kind() != NodeKind::Revision => {
                return bad(format!("release target {} is not a revision", r.target));
            }
            DagNode::Snapshot(s) => {
                for (name, t) in &s.branches {
                    if !matches!(t.kind(), NodeKind::Revision | NodeKind::Release | NodeKind::Directory) {
                        return bad(format!(
                            "branch {} targets a {}",
                            String::from_utf8_lossy(name),
                            t.kind()
                        ));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A distribution place, keyed by URL.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub url: String,
}

/// Dated crawl of an origin that produced a snapshot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub origin: String,
    pub timestamp: i64,
    pub snapshot: NodeId,
}
