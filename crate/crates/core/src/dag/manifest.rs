//! Canonical manifests and Merkle identifiers.
//!
//! Contents, directories, revisions and releases use the Git object
//! encodings (`blob`, `tree`, `commit`, `tag`), so ids computed here equal
//! the native ids of a Git repository. Snapshots hash a sorted list of
//! `name NUL kind NUL digest` records under a `snapshot` header.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::id::{HashAlgo, NodeId, NodeKind};

use super::model::*;

fn header(kind: NodeKind, len: usize) -> Vec<u8> {
    format!("{} {}\0", kind.manifest_type(), len).into_bytes()
}

/// Id of a manifest body of the given kind.
pub fn hash_body(kind: NodeKind, body: &[u8], algo: HashAlgo) -> NodeId {
    NodeId::new(kind, algo.hash(&[&header(kind, body.len()), body]))
}

pub fn content_id(data: &[u8], algo: HashAlgo) -> NodeId {
    hash_body(NodeKind::Content, data, algo)
}

pub fn directory_id(dir: &Directory, algo: HashAlgo) -> NodeId {
    hash_body(NodeKind::Directory, &directory_body(dir), algo)
}

/// Computes the id of `node`. Contents need their bytes.
pub fn compute_node_id(node: &DagNode, algo: HashAlgo) -> Result<NodeId> {
    match node {
        DagNode::Content(c) => match &c.data {
            Some(d) => Ok(content_id(d, algo)),
            None => Err(Error::MissingData(c.id)),
        },
        other => Ok(hash_body(other.kind(), &encode_body(other)?, algo)),
    }
}

/// Manifest body (without the `type len NUL` header) of a non-content node.
pub fn encode_body(node: &DagNode) -> Result<Vec<u8>> {
    Ok(match node {
        DagNode::Content(c) => c.data.clone().ok_or(Error::MissingData(c.id))?,
        DagNode::Directory(d) => directory_body(d),
        DagNode::Revision(r) => revision_body(r),
        DagNode::Release(r) => release_body(r),
        DagNode::Snapshot(s) => snapshot_body(s),
    })
}

pub fn directory_body(dir: &Directory) -> Vec<u8> {
    let mut out = Vec::with_capacity(dir.entries().len() * 48);
    for e in dir.entries() {
        out.extend_from_slice(format!("{:o} ", e.perms).as_bytes());
        out.extend_from_slice(&e.name);
        out.push(0);
        out.extend_from_slice(e.target.digest());
    }
    out
}

fn push_tz(out: &mut Vec<u8>, ts: &Timestamp) {
    let sign = if ts.offset_minutes < 0 { '-' } else { '+' };
    let m = ts.offset_minutes.unsigned_abs();
    out.extend_from_slice(format!("{} {}{:02}{:02}", ts.seconds, sign, m / 60, m % 60).as_bytes());
}

fn push_ident(out: &mut Vec<u8>, key: &str, who: &[u8], ts: &Timestamp) {
    out.extend_from_slice(key.as_bytes());
    out.push(b' ');
    out.extend_from_slice(who);
    out.push(b' ');
    push_tz(out, ts);
    out.push(b'\n');
}

fn push_extra(out: &mut Vec<u8>, headers: &[(Vec<u8>, Vec<u8>)]) {
    for (k, v) in headers {
        out.extend_from_slice(k);
        out.push(b' ');
        for (i, line) in v.split(|&b| b == b'\n').enumerate() {
            if i > 0 {
                out.extend_from_slice(b"\n ");
            }
            out.extend_from_slice(line);
        }
        out.push(b'\n');
    }
}

pub fn revision_body(r: &Revision) -> Vec<u8> {
    let mut out = Vec::with_capacity(256 + r.message.len());
    out.extend_from_slice(b"tree ");
    out.extend_from_slice(r.root.to_hex().as_bytes());
    out.push(b'\n');
    for p in &r.parents {
        out.extend_from_slice(b"parent ");
        out.extend_from_slice(p.to_hex().as_bytes());
        out.push(b'\n');
    }
    push_ident(&mut out, "author", &r.author, &r.author_date);
    push_ident(&mut out, "committer", &r.committer, &r.committer_date);
    push_extra(&mut out, &r.extra_headers);
    out.push(b'\n');
    out.extend_from_slice(&r.message);
    out
}

pub fn release_body(r: &Release) -> Vec<u8> {
    let mut out = Vec::with_capacity(128 + r.message.len());
    out.extend_from_slice(b"object ");
    out.extend_from_slice(r.target.to_hex().as_bytes());
    out.extend_from_slice(b"\ntype commit\ntag ");
    out.extend_from_slice(&r.name);
    out.push(b'\n');
    if let Some((who, ts)) = &r.author {
        push_ident(&mut out, "tagger", who, ts);
    }
    push_extra(&mut out, &r.extra_headers);
    out.push(b'\n');
    out.extend_from_slice(&r.message);
    out
}

pub fn snapshot_body(s: &Snapshot) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, target) in &s.branches {
        out.extend_from_slice(name);
        out.push(0);
        out.extend_from_slice(target.kind().name().as_bytes());
        out.push(0);
        out.extend_from_slice(target.digest());
    }
    out
}

/// Parses a manifest body of the given kind back into a node. Content
/// bodies are the raw bytes.
pub fn decode_body(kind: NodeKind, body: &[u8], algo: HashAlgo) -> Result<DagNode> {
    match kind {
        NodeKind::Content => Ok(DagNode::Content(Content::from_bytes(body.to_vec(), algo))),
        NodeKind::Directory => parse_directory(body, algo).map(DagNode::Directory),
        NodeKind::Revision => parse_revision(body, algo).map(DagNode::Revision),
        NodeKind::Release => parse_release(body, algo).map(DagNode::Release),
        NodeKind::Snapshot => parse_snapshot(body, algo).map(DagNode::Snapshot),
    }
}

fn bad(what: &str) -> Error {
    Error::Decode(format!("malformed {what} manifest"))
}

pub fn parse_directory(body: &[u8], algo: HashAlgo) -> Result<Directory> {
    let dlen = algo.digest_len();
    let mut entries = Vec::new();
    let mut rest = body;
    while !rest.is_empty() {
        let sp = rest.iter().position(|&b| b == b' ').ok_or_else(|| bad("tree"))?;
        let mode_str = std::str::from_utf8(&rest[..sp]).map_err(|_| bad("tree"))?;
        let perms = u32::from_str_radix(mode_str, 8).map_err(|_| bad("tree"))?;
        rest = &rest[sp + 1..];
        let nul = rest.iter().position(|&b| b == 0).ok_or_else(|| bad("tree"))?;
        let name = rest[..nul].to_vec();
        rest = &rest[nul + 1..];
        if rest.len() < dlen {
            return Err(bad("tree"));
        }
        let kind = match perms {
            MODE_DIR => NodeKind::Directory,
            MODE_SUBMODULE => NodeKind::Revision,
            _ => NodeKind::Content,
        };
        let target = NodeId::from_bytes(kind, &rest[..dlen])?;
        rest = &rest[dlen..];
        entries.push(DirectoryEntry { name, target, perms });
    }
    let dir = Directory::new(entries)?;
    Ok(dir)
}

fn split_header_block(body: &[u8]) -> (Vec<(&[u8], Vec<u8>)>, &[u8]) {
    let mut headers: Vec<(&[u8], Vec<u8>)> = Vec::new();
    let mut pos = 0;
    while pos < body.len() {
        let end = body[pos..].iter().position(|&b| b == b'\n').map_or(body.len(), |i| pos + i);
        let line = &body[pos..end];
        pos = (end + 1).min(body.len());
        if line.is_empty() {
            return (headers, &body[pos..]);
        }
        if line[0] == b' ' {
            if let Some(last) = headers.last_mut() {
                last.1.push(b'\n');
                last.1.extend_from_slice(&line[1..]);
            }
            continue;
        }
        let sp = line.iter().position(|&b| b == b' ').unwrap_or(line.len());
        let value = line.get(sp + 1..).unwrap_or(&[]).to_vec();
        headers.push((&line[..sp], value));
    }
    (headers, &[])
}

fn parse_ident(v: &[u8]) -> Result<(Vec<u8>, Timestamp)> {
    let tz_sp = v.iter().rposition(|&b| b == b' ').ok_or_else(|| bad("identity"))?;
    let ts_sp = v[..tz_sp].iter().rposition(|&b| b == b' ').ok_or_else(|| bad("identity"))?;
    let secs: i64 = std::str::from_utf8(&v[ts_sp + 1..tz_sp])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("identity"))?;
    let tz = &v[tz_sp + 1..];
    if tz.len() != 5 || !(tz[0] == b'+' || tz[0] == b'-') {
        return Err(bad("identity timezone"));
    }
    let digits = std::str::from_utf8(&tz[1..]).map_err(|_| bad("identity timezone"))?;
    let hh: i16 = digits[..2].parse().map_err(|_| bad("identity timezone"))?;
    let mm: i16 = digits[2..].parse().map_err(|_| bad("identity timezone"))?;
    let mut off = hh * 60 + mm;
    if tz[0] == b'-' {
        off = -off;
    }
    Ok((v[..ts_sp].to_vec(), Timestamp { seconds: secs, offset_minutes: off }))
}

fn hex_id(kind: NodeKind, v: &[u8]) -> Result<NodeId> {
    let s = std::str::from_utf8(v).map_err(|_| bad("reference"))?;
    NodeId::from_hex(kind, s)
}

pub fn parse_revision(body: &[u8], _algo: HashAlgo) -> Result<Revision> {
    let (headers, message) = split_header_block(body);
    let mut root = None;
    let mut parents = Vec::new();
    let mut author = None;
    let mut committer = None;
    let mut extra_headers = Vec::new();
    for (k, v) in headers {
        match k {
            b"tree" if root.is_none() => root = Some(hex_id(NodeKind::Directory, &v)?),
            b"parent" if author.is_none() => parents.push(hex_id(NodeKind::Revision, &v)?),
            b"author" if author.is_none() => author = Some(parse_ident(&v)?),
            b"committer" if committer.is_none() => committer = Some(parse_ident(&v)?),
            _ => extra_headers.push((k.to_vec(), v)),
        }
    }
    let (author, author_date) = author.ok_or_else(|| bad("commit"))?;
    let (committer, committer_date) = committer.ok_or_else(|| bad("commit"))?;
    Ok(Revision {
        root: root.ok_or_else(|| bad("commit"))?,
        parents,
        author,
        author_date,
        committer,
        committer_date,
        extra_headers,
        message: message.to_vec(),
    })
}

pub fn parse_release(body: &[u8], _algo: HashAlgo) -> Result<Release> {
    let (headers, message) = split_header_block(body);
    let mut target = None;
    let mut name = None;
    let mut author = None;
    let mut extra_headers = Vec::new();
    for (k, v) in headers {
        match k {
            b"object" if target.is_none() => target = Some(v),
            b"type" => {
                if v != b"commit" {
                    return Err(Error::UnsupportedObject(format!(
                        "tag targets a {}",
                        String::from_utf8_lossy(&v)
                    )));
                }
            }
            b"tag" if name.is_none() => name = Some(v),
            b"tagger" if author.is_none() => author = Some(parse_ident(&v)?),
            _ => extra_headers.push((k.to_vec(), v)),
        }
    }
    Ok(Release {
        target: hex_id(NodeKind::Revision, &target.ok_or_else(|| bad("tag"))?)?,
        name: name.ok_or_else(|| bad("tag"))?,
        author,
        extra_headers,
        message: message.to_vec(),
    })
}

pub fn parse_snapshot(body: &[u8], algo: HashAlgo) -> Result<Snapshot> {
    let dlen = algo.digest_len();
    let mut branches = BTreeMap::new();
    let mut rest = body;
    while !rest.is_empty() {
        let n1 = rest.iter().position(|&b| b == 0).ok_or_else(|| bad("snapshot"))?;
        let name = rest[..n1].to_vec();
        rest = &rest[n1 + 1..];
        let n2 = rest.iter().position(|&b| b == 0).ok_or_else(|| bad("snapshot"))?;
        let kind = std::str::from_utf8(&rest[..n2])
            .ok()
            .and_then(NodeKind::from_name)
            .ok_or_else(|| bad("snapshot"))?;
        rest = &rest[n2 + 1..];
        if rest.len() < dlen {
            return Err(bad("snapshot"));
        }
        branches.insert(name, NodeId::from_bytes(kind, &rest[..dlen])?);
        rest = &rest[dlen..];
    }
    Ok(Snapshot { branches })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EMPTY_BLOB: &str = "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391";

    #[test]
    fn empty_content_matches_git() {
        let c = Content::from_bytes(Vec::new(), HashAlgo::Sha1);
        assert_eq!(c.id.to_hex(), EMPTY_BLOB);
        assert_eq!(compute_node_id(&DagNode::Content(c), HashAlgo::Sha1).unwrap().to_hex(), EMPTY_BLOB);
    }

    #[test]
    fn metadata_only_content_cannot_be_hashed() {
        let c = Content::from_bytes(b"abc".to_vec(), HashAlgo::Sha1).without_data();
        assert!(matches!(compute_node_id(&DagNode::Content(c), HashAlgo::Sha1), Err(Error::MissingData(_))));
    }

    #[test]
    fn single_file_tree_matches_git_mktree() {
        // `printf '100644 blob e69de...\ta.txt\n' | git mktree`
        let empty = Content::from_bytes(Vec::new(), HashAlgo::Sha1).id;
        let dir = Directory::new(vec![DirectoryEntry::file("a.txt", empty)]).unwrap();
        assert_eq!(directory_id(&dir, HashAlgo::Sha1).to_hex(), "65a457425a679cbe9adf0d2741785d3ceabb44a7");
    }

    #[test]
    fn empty_tree_matches_git() {
        assert_eq!(
            directory_id(&Directory::empty(), HashAlgo::Sha1).to_hex(),
            "4b825dc642cb6eb9a060e54bf8d69288fbee4904"
        );
    }

    fn sample_revision() -> Revision {
        let root = directory_id(&Directory::empty(), HashAlgo::Sha1);
        Revision {
            root,
            parents: vec![],
            author: b"A U Thor <author@example.com>".to_vec(),
            author_date: Timestamp { seconds: 1112911993, offset_minutes: -420 },
            committer: b"C O Mitter <committer@example.com>".to_vec(),
            committer_date: Timestamp { seconds: 1112912053, offset_minutes: 90 },
            extra_headers: vec![(b"gpgsig".to_vec(), b"-----BEGIN-----\nabc\n-----END-----".to_vec())],
            message: b"initial\n".to_vec(),
        }
    }

    #[test]
    fn revision_manifest_round_trips() {
        let r = sample_revision();
        let body = revision_body(&r);
        assert!(body.starts_with(b"tree 4b825dc642cb6eb9a060e54bf8d69288fbee4904\nauthor A U Thor"));
        assert!(body.windows(7).any(|w| w == b"-0700\nc"));
        assert_eq!(parse_revision(&body, HashAlgo::Sha1).unwrap(), r);
    }

    #[test]
    fn identical_revisions_share_ids() {
        let a = DagNode::Revision(sample_revision());
        let b = DagNode::Revision(sample_revision());
        assert_eq!(compute_node_id(&a, HashAlgo::Sha1).unwrap(), compute_node_id(&b, HashAlgo::Sha1).unwrap());
    }

    #[test]
    fn release_and_snapshot_round_trip() {
        let rev = compute_node_id(&DagNode::Revision(sample_revision()), HashAlgo::Sha1).unwrap();
        let rel = Release {
            target: rev,
            name: b"v1.0".to_vec(),
            author: Some((b"T <t@x>".to_vec(), Timestamp::utc(5))),
            extra_headers: vec![],
            message: b"release\n".to_vec(),
        };
        assert_eq!(parse_release(&release_body(&rel), HashAlgo::Sha1).unwrap(), rel);
        let mut snap = Snapshot::default();
        snap.branches.insert(b"refs/heads/main".to_vec(), rev);
        snap.branches.insert(b"refs/tags/v1.0".to_vec(), hash_body(NodeKind::Release, &release_body(&rel), HashAlgo::Sha1));
        assert_eq!(parse_snapshot(&snapshot_body(&snap), HashAlgo::Sha1).unwrap(), snap);
    }

    #[test]
    fn tag_of_tree_is_unsupported() {
        let body = b"object 4b825dc642cb6eb9a060e54bf8d69288fbee4904\ntype tree\ntag t\n\nmsg";
        assert!(matches!(parse_release(body, HashAlgo::Sha1), Err(Error::UnsupportedObject(_))));
    }
}
