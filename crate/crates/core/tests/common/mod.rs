//! Brute-force references for provenance queries, shared by integration
//! and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use prov_core::dag::{Content, DagNode, DagRead, Directory, DirectoryEntry, Revision, TimestampFilter};
use prov_core::provenance::{all_occurrences, build, first_occurrence, BuildOptions, Model, Occurrence};
use prov_core::storage::{KvRead, ReadView};
use prov_core::{HashAlgo, NodeId, NodeKind, Store};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every occurrence of every content, found by walking each revision's
/// full tree. Occurrence lists are sorted.
pub fn oracle(view: &ReadView) -> BTreeMap<NodeId, Vec<Occurrence>> {
    let mut out: BTreeMap<NodeId, Vec<Occurrence>> = BTreeMap::new();
    for r in view.iter_revisions_chronological(TimestampFilter::ALL).unwrap() {
        let (id, rev) = r.unwrap();
        let mut stack: Vec<(NodeId, String)> = vec![(rev.root, String::new())];
        while let Some((d, prefix)) = stack.pop() {
            for e in view.get_directory(&d).unwrap().entries() {
                let name = String::from_utf8(e.name.clone()).unwrap();
                let path = if prefix.is_empty() { name } else { format!("{prefix}/{name}") };
                match e.target.kind() {
                    NodeKind::Content => out.entry(e.target).or_default().push(Occurrence {
                        content: e.target,
                        timestamp: rev.timestamp(),
                        revision: id,
                        path: path.into_bytes(),
                    }),
                    NodeKind::Directory => stack.push((e.target, path)),
                    _ => {}
                }
            }
        }
    }
    for v in out.values_mut() {
        v.sort();
    }
    out
}

pub fn build_all(store: &Store) {
    for m in Model::ALL {
        build(store, m, &BuildOptions::default()).unwrap();
    }
}

/// Compares every model with the oracle on every content. Returns the
/// number of occurrences checked.
pub fn check_against_oracle(store: &Store) -> Result<usize, String> {
    let view = store.read().unwrap();
    let truth = oracle(&view);
    let mut checked = 0;
    for (c, occ) in &truth {
        for m in Model::ALL {
            let first = first_occurrence(&view, m, c).map_err(|e| format!("{m} first {c}: {e}"))?;
            if &first != occ.first().unwrap() {
                return Err(format!("{m} first {c}: got {first:?}, want {:?}", occ[0]));
            }
            let mut all: Vec<Occurrence> = all_occurrences(&view, m, c)
                .map_err(|e| format!("{m} all {c}: {e}"))?
                .collect::<Result<_, _>>()
                .map_err(|e| format!("{m} all {c}: {e}"))?;
            all.sort();
            if &all != occ {
                return Err(format!("{m} all {c}: {} results, want {}", all.len(), occ.len()));
            }
        }
        checked += occ.len();
    }
    Ok(checked)
}

/// Random revisions over a small pool of shared contents and
/// directories, with timestamp ties, repeated roots and repeated
/// subtrees inside one tree.
pub fn random_corpus(store: &Store, seed: u64, revisions: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    store
        .write(|w| {
            let algo = w.algo();
            let mut contents: Vec<NodeId> = Vec::new();
            for i in 0..rng.random_range(2..12) {
                let c = Content::from_bytes(format!("content {seed} {i}\n").into_bytes(), algo);
                contents.push(w.insert_node(&DagNode::Content(c))?.0);
            }
            let mut dirs: Vec<NodeId> = Vec::new();
            let mut revs: Vec<NodeId> = Vec::new();
            for r in 0..revisions {
                // Build a fresh root from a few random children.
                let mut entries = Vec::new();
                for j in 0..rng.random_range(1..5) {
                    let name = format!("e{j}");
                    if !dirs.is_empty() && rng.random_bool(0.4) {
                        entries.push(DirectoryEntry::dir(name, dirs[rng.random_range(0..dirs.len())]));
                    } else if rng.random_bool(0.3) {
                        let sub: Vec<DirectoryEntry> = (0..rng.random_range(1..3))
                            .map(|k| DirectoryEntry::file(format!("f{k}"), contents[rng.random_range(0..contents.len())]))
                            .collect();
                        let d = w.insert_node(&DagNode::Directory(Directory::new(sub)?))?.0;
                        dirs.push(d);
                        entries.push(DirectoryEntry::dir(name, d));
                    } else {
                        entries.push(DirectoryEntry::file(name, contents[rng.random_range(0..contents.len())]));
                    }
                }
                let root = if !dirs.is_empty() && rng.random_bool(0.15) {
                    dirs[rng.random_range(0..dirs.len())]
                } else {
                    w.insert_node(&DagNode::Directory(Directory::new(entries)?))?.0
                };
                dirs.push(root);
                let t = rng.random_range(0..(revisions as i64 / 2 + 2));
                let parents = revs.last().copied().into_iter().collect();
                let rev = Revision::simple(root, parents, "dev <dev@example.org>", t, &format!("r{r}"));
                revs.push(w.insert_node(&DagNode::Revision(rev))?.0);
            }
            Ok(())
        })
        .unwrap();
}

pub fn toy_store() -> Store {
    let store = Store::in_memory(HashAlgo::Sha1).unwrap();
    prov_core::gen::into_store(&store, prov_core::gen::toy).unwrap();
    store
}

/// Relation sizes recomputed from the raw DAG, keyed by model and
/// relation name, plus the number of directories each model stores.
pub struct ScriptCounts {
    pub relations: BTreeMap<(Model, &'static str), u64>,
    pub directories: BTreeMap<Model, u64>,
    pub contents: u64,
}

pub fn script_counts(view: &ReadView) -> ScriptCounts {
    use std::collections::{HashMap, HashSet};

    let mut rel: BTreeMap<(Model, &'static str), u64> = BTreeMap::new();
    let mut seen_dirs: HashSet<NodeId> = HashSet::new();
    let mut all_dirs: HashSet<NodeId> = HashSet::new();
    let mut contents: HashSet<NodeId> = HashSet::new();
    let mut flattened: HashSet<NodeId> = HashSet::new();
    let mut occurrences_below: HashMap<NodeId, u64> = HashMap::new();
    let mut revisions = 0;

    fn below(view: &ReadView, d: NodeId, memo: &mut HashMap<NodeId, u64>) -> u64 {
        if let Some(n) = memo.get(&d) {
            return *n;
        }
        let mut n = 0;
        for e in view.get_directory(&d).unwrap().entries() {
            match e.target.kind() {
                NodeKind::Content => n += 1,
                NodeKind::Directory => n += below(view, e.target, memo),
                _ => {}
            }
        }
        memo.insert(d, n);
        n
    }

    for r in view.revision_refs(TimestampFilter::ALL).unwrap() {
        let r = r.unwrap();
        revisions += 1;
        *rel.entry((Model::Flat, "C-occur-in-R")).or_default() += below(view, r.root, &mut occurrences_below);
        let mut frontier: Vec<NodeId> = Vec::new();
        let mut inner_now: HashSet<NodeId> = HashSet::new();
        if seen_dirs.contains(&r.root) {
            frontier.push(r.root);
        } else {
            let mut stack = vec![r.root];
            while let Some(d) = stack.pop() {
                inner_now.insert(d);
                for e in view.get_directory(&d).unwrap().entries() {
                    match e.target.kind() {
                        NodeKind::Content => {
                            contents.insert(e.target);
                            *rel.entry((Model::Compact, "C-occur-early-in-R")).or_default() += 1;
                        }
                        NodeKind::Directory if seen_dirs.contains(&e.target) => frontier.push(e.target),
                        NodeKind::Directory => stack.push(e.target),
                        _ => {}
                    }
                }
            }
        }
        *rel.entry((Model::Compact, "D-occur-in-R")).or_default() += frontier.len() as u64;
        for d in frontier {
            if flattened.insert(d) {
                *rel.entry((Model::Compact, "C-occur-in-D")).or_default() += below(view, d, &mut occurrences_below);
            }
        }
        seen_dirs.extend(inner_now.iter().copied());
        all_dirs.extend(inner_now);
    }
    let mut cd = 0;
    let mut dd = 0;
    for d in &all_dirs {
        for e in view.get_directory(d).unwrap().entries() {
            match e.target.kind() {
                NodeKind::Content => cd += 1,
                NodeKind::Directory => dd += 1,
                _ => {}
            }
        }
    }
    rel.insert((Model::Recursive, "C-occur-in-D"), cd);
    rel.insert((Model::Recursive, "D-occur-in-D"), dd);
    rel.insert((Model::Recursive, "D-occur-in-R"), revisions);
    for m in Model::ALL {
        for (name, _) in m.relations() {
            rel.entry((m, name)).or_default();
        }
    }
    let directories = BTreeMap::from([
        (Model::Flat, 0),
        (Model::Compact, flattened.len() as u64),
        (Model::Recursive, all_dirs.len() as u64),
    ]);
    ScriptCounts { relations: rel, directories, contents: contents.len() as u64 }
}

/// Differences between `model_stats` and [`script_counts`], empty when they
/// agree.
pub fn stats_mismatches(store: &Store) -> Vec<String> {
    let view = store.read().unwrap();
    let script = script_counts(&view);
    let mut out = Vec::new();
    for m in Model::ALL {
        let s = prov_core::provenance::model_stats(&view, m).unwrap();
        for r in &s.relations {
            let want = script.relations[&(m, r.name)];
            if r.count != want {
                out.push(format!("{m} {}: {} != {want}", r.name, r.count));
            }
        }
        if s.directories != script.directories[&m] {
            out.push(format!("{m} directories: {} != {}", s.directories, script.directories[&m]));
        }
        if s.contents != script.contents {
            out.push(format!("{m} contents: {} != {}", s.contents, script.contents));
        }
    }
    out
}

fn run_git(repo: &std::path::Path, args: &[&str], date: i64) -> String {
    let out = std::process::Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(["-c", "user.name=Tester", "-c", "user.email=tester@example.org", "-c", "init.defaultBranch=main"])
        .args(["-c", "commit.gpgsign=false", "-c", "tag.gpgsign=false"])
        .args(args)
        .env("GIT_AUTHOR_DATE", format!("{date} +0000"))
        .env("GIT_COMMITTER_DATE", format!("{date} +0000"))
        .output()
        .expect("git executable");
    assert!(out.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().trim().to_string()
}

/// Scripted repository: four commits over two branches with nested trees,
/// a shared file and an annotated tag. Returns `(commit oid, committer
/// time)` in creation order.
pub fn scripted_git_repo(repo: &std::path::Path) -> Vec<(String, i64)> {
    let write = |path: &str, text: &str| {
        let p = repo.join(path);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, text).unwrap();
    };
    std::fs::create_dir_all(repo).unwrap();
    run_git(repo, &["init", "-q"], 0);
    let mut commits = Vec::new();
    let mut commit = |msg: &str, t: i64| {
        run_git(repo, &["add", "-A"], t);
        run_git(repo, &["commit", "-q", "-m", msg], t);
        commits.push((run_git(repo, &["rev-parse", "HEAD"], t), t));
    };
    write("README", "hello\n");
    write("src/main.c", "int main(void) { return 0; }\n");
    commit("initial", 1_500_000_000);
    write("src/lib/util.c", "int util(void) { return 1; }\n");
    write("docs/README", "hello\n");
    commit("add util", 1_500_000_100);
    run_git(repo, &["tag", "-a", "v1", "-m", "first release"], 1_500_000_150);
    run_git(repo, &["checkout", "-q", "-b", "feature"], 1_500_000_150);
    write("src/lib/extra.c", "int extra;\n");
    commit("feature work", 1_500_000_200);
    run_git(repo, &["checkout", "-q", "main"], 1_500_000_250);
    write("README", "hello again\n");
    commit("touch readme", 1_500_000_300);
    commits
}

pub fn git_output(repo: &std::path::Path, args: &[&str]) -> String {
    run_git(repo, args, 0)
}

/// Raw key/value pairs of a model's clock, relations and directory table.
pub fn index_dump(store: &Store, model: Model) -> Vec<Vec<(Vec<u8>, Vec<u8>)>> {
    let view = store.read().unwrap();
    let mut spaces = vec![model.clock()];
    spaces.extend(model.relations().iter().map(|(_, ks)| *ks));
    if model == Model::Compact {
        spaces.push(prov_core::storage::Keyspace::CompactDirs);
    }
    spaces
        .into_iter()
        .map(|ks| view.scan(ks, b"", None).unwrap().map(Result::unwrap).collect())
        .collect()
}
