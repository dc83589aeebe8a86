//! Git adapter built on the plumbing commands of the `git` executable.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use super::IngestStats;
use crate::dag::manifest::decode_body;
use crate::dag::{compute_node_id, Content, DagNode, Snapshot, Visit};
use crate::error::{Error, Result};
use crate::id::{HashAlgo, NodeId, NodeKind};
use crate::storage::{KvRead, Store};

fn git(repo: &Path, args: &[&str]) -> Result<Vec<u8>> {
    let out = Command::new("git").arg("-C").arg(repo).args(args).stderr(Stdio::piped()).output()?;
    if !out.status.success() {
        return Err(Error::InvalidParams(format!(
            "git {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(out.stdout)
}

fn kind_of(git_type: &str) -> Result<NodeKind> {
    Ok(match git_type {
        "blob" => NodeKind::Content,
        "tree" => NodeKind::Directory,
        "commit" => NodeKind::Revision,
        "tag" => NodeKind::Release,
        other => return Err(Error::UnsupportedObject(format!("git object type {other}"))),
    })
}

/// Reads objects through one `git cat-file --batch` process.
fn read_objects(repo: &Path, oids: &[String]) -> Result<Vec<(NodeKind, String, Vec<u8>)>> {
    let mut child = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(["cat-file", "--batch"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let input: Vec<u8> = oids.iter().flat_map(|o| format!("{o}\n").into_bytes()).collect();
    let feeder = std::thread::spawn(move || stdin.write_all(&input));
    let mut reader = BufReader::new(child.stdout.take().expect("piped stdout"));
    let mut objects = Vec::with_capacity(oids.len());
    let mut header = String::new();
    for _ in oids {
        header.clear();
        reader.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let [oid, ty, size] = parts[..] else {
            return Err(Error::UnsupportedObject(format!("unexpected cat-file output {header:?}")));
        };
        let size: usize = size.parse().map_err(|_| Error::Decode(format!("bad size in {header:?}")))?;
        let mut body = vec![0; size + 1];
        reader.read_exact(&mut body)?;
        body.pop();
        objects.push((kind_of(ty)?, oid.to_string(), body));
    }
    feeder.join().map_err(|_| Error::Io(std::io::Error::other("cat-file feeder panicked")))??;
    child.wait()?;
    Ok(objects)
}

/// Ingests every object reachable from the refs of the repository at
/// `repo`, builds a snapshot of its refs and records one visit.
pub fn ingest_git_repository(store: &Store, repo: &Path, origin_url: &str, visit_time: i64) -> Result<(IngestStats, Visit)> {
    if store.algo() != HashAlgo::Sha1 {
        return Err(Error::InvalidParams("git ingestion requires a sha1 store".into()));
    }
    if !repo.exists() || git(repo, &["rev-parse", "--git-dir"]).is_err() {
        return Err(Error::RepoNotFound(repo.to_path_buf()));
    }
    let refs_raw = git(repo, &["for-each-ref", "--format=%(objectname) %(objecttype) %(refname)"])?;
    let listing = git(repo, &["rev-list", "--objects", "--all"])?;
    let mut oids: Vec<String> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for line in String::from_utf8_lossy(&listing).lines() {
        if let Some(oid) = line.split(' ').next().filter(|o| !o.is_empty()) {
            if seen.insert(oid.to_string()) {
                oids.push(oid.to_string());
            }
        }
    }
    let mut branches: BTreeMap<Vec<u8>, NodeId> = BTreeMap::new();
    for line in refs_raw.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
        let mut it = line.splitn(3, |&b| b == b' ');
        let (Some(oid), Some(ty), Some(name)) = (it.next(), it.next(), it.next()) else { continue };
        let oid = String::from_utf8_lossy(oid).into_owned();
        let kind = kind_of(&String::from_utf8_lossy(ty))?;
        if kind == NodeKind::Content {
            return Err(Error::UnsupportedObject(format!("ref {} points at a blob", String::from_utf8_lossy(name))));
        }
        if seen.insert(oid.clone()) {
            oids.push(oid.clone());
        }
        branches.insert(name.to_vec(), NodeId::from_hex(kind, &oid)?);
    }

    let mut nodes: HashMap<NodeId, DagNode> = HashMap::with_capacity(oids.len());
    for (kind, oid, body) in read_objects(repo, &oids)? {
        let expected = NodeId::from_hex(kind, &oid)?;
        let node = match kind {
            NodeKind::Content => DagNode::Content(Content::from_bytes(body, HashAlgo::Sha1)),
            k => decode_body(k, &body, HashAlgo::Sha1)?,
        };
        let computed = compute_node_id(&node, HashAlgo::Sha1)?;
        if computed != expected {
            return Err(Error::InvalidNode(format!("recomputed {computed} for git object {oid}")));
        }
        nodes.insert(expected, node);
    }

    store.write(|w| {
        let mut stats = IngestStats::default();
        let mut done: HashSet<NodeId> = HashSet::new();
        let mut order: Vec<NodeId> = nodes.keys().copied().collect();
        order.sort();
        for start in order {
            // Post-order so references are stored first.
            let mut stack = vec![(start, false)];
            while let Some((id, expanded)) = stack.pop() {
                if done.contains(&id) {
                    continue;
                }
                let Some(node) = nodes.get(&id) else { continue };
                if expanded {
                    let (_, inserted) = w.insert_node(node)?;
                    stats.record(id.kind(), inserted);
                    done.insert(id);
                    continue;
                }
                stack.push((id, true));
                for r in node.references() {
                    if !done.contains(&r) && nodes.contains_key(&r) {
                        stack.push((r, false));
                    }
                }
            }
        }
        let snapshot = DagNode::Snapshot(Snapshot { branches });
        let (sid, inserted) = w.insert_node(&snapshot)?;
        stats.record(NodeKind::Snapshot, inserted);
        if !w.contains(crate::storage::Keyspace::Origins, origin_url.as_bytes())? {
            stats.origins_added += 1;
        }
        let visit = w.record_visit(origin_url, visit_time, sid)?;
        stats.visits_added += 1;
        Ok((stats, visit))
    })
}
