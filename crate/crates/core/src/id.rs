//! Intrinsic node identifiers.
//!
//! A [`NodeId`] pairs the node kind with the digest of its canonical
//! manifest. Ids of different kinds never compare equal, even when the
//! digests coincide.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha1::Digest as _;

use crate::error::{Error, Result};

const MAX_DIGEST: usize = 32;

/// Digest algorithm used to address nodes. Configured once per store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HashAlgo {
    #[default]
    Sha1,
    Sha256,
}

impl HashAlgo {
    pub const fn digest_len(self) -> usize {
        match self {
            HashAlgo::Sha1 => 20,
            HashAlgo::Sha256 => 32,
        }
    }

    /// Hashes the concatenation of `parts`.
    pub fn hash(self, parts: &[&[u8]]) -> Digest {
        match self {
            HashAlgo::Sha1 => {
                let mut h = sha1::Sha1::new();
                for p in parts {
                    h.update(p);
                }
                Digest::from_slice(&h.finalize()).expect("sha1 length")
            }
            HashAlgo::Sha256 => {
                let mut h = sha2::Sha256::new();
                for p in parts {
                    h.update(p);
                }
                Digest::from_slice(&h.finalize()).expect("sha256 length")
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HashAlgo::Sha1 => "sha1",
            HashAlgo::Sha256 => "sha256",
        }
    }
}

impl FromStr for HashAlgo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sha1" => Ok(HashAlgo::Sha1),
            "sha256" => Ok(HashAlgo::Sha256),
            other => Err(Error::InvalidParams(format!("unknown hash algorithm {other:?}"))),
        }
    }
}

/// Raw digest bytes, 20 or 32 long.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest {
    len: u8,
    bytes: [u8; MAX_DIGEST],
}

impl Digest {
    pub fn from_slice(b: &[u8]) -> Option<Digest> {
        if b.len() != 20 && b.len() != 32 {
            return None;
        }
        let mut bytes = [0u8; MAX_DIGEST];
        bytes[..b.len()].copy_from_slice(b);
        Some(Digest { len: b.len() as u8, bytes })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len as usize]
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.as_bytes())
    }
}

impl PartialOrd for Digest {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Digest {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.as_bytes().cmp(other.as_bytes())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// The five Merkle node kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Content,
    Directory,
    Revision,
    Release,
    Snapshot,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::Content,
        NodeKind::Directory,
        NodeKind::Revision,
        NodeKind::Release,
        NodeKind::Snapshot,
    ];

    /// Short prefix used in the textual rendering (`rev:af13...`).
    pub fn prefix(self) -> &'static str {
        match self {
            NodeKind::Content => "cnt",
            NodeKind::Directory => "dir",
            NodeKind::Revision => "rev",
            NodeKind::Release => "rel",
            NodeKind::Snapshot => "snp",
        }
    }

    pub fn from_prefix(p: &str) -> Option<NodeKind> {
        NodeKind::ALL.into_iter().find(|k| k.prefix() == p)
    }

    /// Single byte tag used in storage keys.
    pub fn tag(self) -> u8 {
        match self {
            NodeKind::Content => 1,
            NodeKind::Directory => 2,
            NodeKind::Revision => 3,
            NodeKind::Release => 4,
            NodeKind::Snapshot => 5,
        }
    }

    pub fn from_tag(t: u8) -> Option<NodeKind> {
        NodeKind::ALL.into_iter().find(|k| k.tag() == t)
    }

    /// Object type word used in the hashed manifest header.
    pub fn manifest_type(self) -> &'static str {
        match self {
            NodeKind::Content => "blob",
            NodeKind::Directory => "tree",
            NodeKind::Revision => "commit",
            NodeKind::Release => "tag",
            NodeKind::Snapshot => "snapshot",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Content => "content",
            NodeKind::Directory => "directory",
            NodeKind::Revision => "revision",
            NodeKind::Release => "release",
            NodeKind::Snapshot => "snapshot",
        }
    }

    pub fn from_name(s: &str) -> Option<NodeKind> {
        NodeKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Intrinsic identifier of a DAG node: kind plus manifest digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    kind: NodeKind,
    digest: Digest,
}

impl NodeId {
    pub fn new(kind: NodeKind, digest: Digest) -> NodeId {
        NodeId { kind, digest }
    }

    pub fn from_bytes(kind: NodeKind, bytes: &[u8]) -> Result<NodeId> {
        let digest = Digest::from_slice(bytes)
            .ok_or_else(|| Error::Decode(format!("bad digest length {}", bytes.len())))?;
        Ok(NodeId { kind, digest })
    }

    pub fn from_hex(kind: NodeKind, hex_digest: &str) -> Result<NodeId> {
        let raw = hex::decode(hex_digest)
            .map_err(|e| Error::Decode(format!("bad hex digest {hex_digest:?}: {e}")))?;
        NodeId::from_bytes(kind, &raw)
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn digest(&self) -> &[u8] {
        self.digest.as_bytes()
    }

    pub fn to_hex(&self) -> String {
        self.digest.to_hex()
    }

    /// Storage key: kind tag followed by the raw digest.
    pub fn key(&self) -> Vec<u8> {
        let mut k = Vec::with_capacity(1 + self.digest().len());
        k.push(self.kind.tag());
        k.extend_from_slice(self.digest());
        k
    }

    pub fn from_key(key: &[u8]) -> Result<NodeId> {
        let (&tag, rest) = key
            .split_first()
            .ok_or_else(|| Error::Decode("empty node key".into()))?;
        let kind =
            NodeKind::from_tag(tag).ok_or_else(|| Error::Decode(format!("bad kind tag {tag}")))?;
        NodeId::from_bytes(kind, rest)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.prefix(), self.digest.to_hex())
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<NodeId> {
        let (prefix, hex_digest) = s
            .split_once(':')
            .ok_or_else(|| Error::Decode(format!("node id {s:?} lacks a kind prefix")))?;
        let kind = NodeKind::from_prefix(prefix)
            .ok_or_else(|| Error::Decode(format!("unknown node kind prefix {prefix:?}")))?;
        NodeId::from_hex(kind, hex_digest)
    }
}

impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_never_compare_equal() {
        let d = HashAlgo::Sha1.hash(&[b"x"]);
        assert_ne!(NodeId::new(NodeKind::Content, d), NodeId::new(NodeKind::Directory, d));
    }

    #[test]
    fn text_form_round_trips() {
        let id: NodeId = "rev:e69de29bb2d1d6434b8b29ae775ad8c2e48c5391".parse().unwrap();
        assert_eq!(id.kind(), NodeKind::Revision);
        assert_eq!(id.to_string(), "rev:e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
        assert_eq!(NodeId::from_key(&id.key()).unwrap(), id);
        assert!("xyz:00".parse::<NodeId>().is_err());
        assert!("cnt:abcd".parse::<NodeId>().is_err());
    }

    #[test]
    fn digest_length_follows_algorithm() {
        assert_eq!(HashAlgo::Sha1.hash(&[b""]).as_bytes().len(), 20);
        assert_eq!(HashAlgo::Sha256.hash(&[b""]).as_bytes().len(), 32);
    }
}
