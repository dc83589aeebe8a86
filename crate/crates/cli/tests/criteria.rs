//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero when any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use prov_core::analytics::{
    doubling_months, fit_exponential, fit_power_law, fit_power_law_points, normalize_sloc, original_growth_series,
    sloc_multiplication, BucketWidth, Histogram, Sample, SlocSample,
};
use prov_core::dag::{DagNode, DagRead, Directory, DirectoryEntry, Revision, TimestampFilter};
use prov_core::gen::{
    extreme_disjoint, extreme_shared_root, generate, into_store, planted_sloc, GenParams, PlantedLine, RevisionCount,
};
use prov_core::ingest::ingest_git_repository;
use prov_core::provenance::{build, compare_models, model_stats, BuildOptions, Model, ModelState, ModelStats, RelationCount};
use prov_core::storage::{KvRead, Keyspace};
use prov_core::{HashAlgo, NodeId, NodeKind, OpenMode, Store};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "oracle equivalence", oracle_equivalence),
        (2, "shared-root exact counts", shared_root_counts),
        (3, "disjoint trees", disjoint_trees),
        (4, "counting rules", counting_rules),
        (5, "published size ratios", published_ratios),
        (6, "growth fit recovery", growth_fit),
        (7, "power-law recovery", power_law),
        (8, "git fidelity", git_fidelity),
        (9, "incremental builds", incrementality),
        (10, "streaming query", streaming),
        (11, "sloc pipeline", sloc_pipeline),
    ];
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (n, name, check) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn memory_store() -> Store {
    Store::in_memory(HashAlgo::Sha1).unwrap()
}

fn relation_counts(store: &Store, m: Model) -> Vec<u64> {
    model_stats(&store.read().unwrap(), m).unwrap().relations.iter().map(|r| r.count).collect()
}

fn oracle_equivalence() -> Outcome {
    let store = common::toy_store();
    common::build_all(&store);
    let mut checked = common::check_against_oracle(&store)?;
    let mut revisions = 3;
    let mut contents = 2;
    for seed in 1..=20u64 {
        // Two large corpora near 10^4 revisions, the rest small and varied.
        let (origins, per) = if seed > 18 { (250, RevisionCount::Uniform(20, 60)) } else { (4 + seed as usize, RevisionCount::Uniform(5, 40)) };
        let p = GenParams {
            seed,
            n_origins: origins,
            revisions_per_origin: per,
            slots: 8 + (seed as usize % 5) * 6,
            fork_probability: 0.05 * (seed % 6) as f64,
            ..GenParams::default()
        };
        let store = memory_store();
        let report = into_store(&store, |s| generate(s, &p)).unwrap();
        common::build_all(&store);
        checked += common::check_against_oracle(&store).map_err(|e| format!("seed {seed}: {e}"))?;
        revisions = revisions.max(report.revisions);
        contents = contents.max(report.contents);
    }
    Ok(format!("toy + 20 corpora (largest {revisions} revisions, {contents} contents), {checked} occurrences"))
}

fn shared_root_counts() -> Outcome {
    let mut bad = Vec::new();
    for n in [1usize, 5, 100] {
        for k in [1usize, 3, 50] {
            let store = memory_store();
            into_store(&store, |s| extreme_shared_root(s, n, k, 1_000)).unwrap();
            common::build_all(&store);
            let (n64, k64) = (n as u64, k as u64);
            let compact = relation_counts(&store, Model::Compact);
            let flat = relation_counts(&store, Model::Flat);
            let want = vec![k64, n64 - 1, k64];
            if compact != want || flat != vec![n64 * k64] {
                bad.push(format!("n={n} k={k}: compact {compact:?} want {want:?}, flat {flat:?}"));
            }
        }
    }
    ensure(bad.is_empty(), || bad.join("; "))?;
    Ok("9 (n, k) cells exact".into())
}

fn keys(store: &Store, ks: Keyspace) -> Vec<Vec<u8>> {
    store.read().unwrap().scan(ks, b"", None).unwrap().map(|kv| kv.unwrap().0).collect()
}

fn disjoint_trees() -> Outcome {
    let mut rows = 0;
    for n in [1usize, 5, 100] {
        for nested in [false, true] {
            let store = memory_store();
            into_store(&store, |s| extreme_disjoint(s, n, 4, nested, 1_000)).unwrap();
            common::build_all(&store);
            let flat = keys(&store, Keyspace::Flat);
            ensure(flat == keys(&store, Keyspace::CompactCer), || format!("n={n} nested={nested}: early set differs"))?;
            ensure(keys(&store, Keyspace::CompactDor).is_empty(), || format!("n={n} nested={nested}: frontier not empty"))?;
            rows += flat.len();
        }
    }
    Ok(format!("{rows} occurrence rows identical, no frontier edges"))
}

fn counting_rules() -> Outcome {
    let toy = common::toy_store();
    common::build_all(&toy);
    let mismatches = common::stats_mismatches(&toy);
    ensure(mismatches.is_empty(), || format!("toy: {mismatches:?}"))?;
    for seed in 1..=5 {
        let store = memory_store();
        common::random_corpus(&store, 1000 + seed, 100);
        common::build_all(&store);
        let mismatches = common::stats_mismatches(&store);
        ensure(mismatches.is_empty(), || format!("corpus {seed}: {mismatches:?}"))?;
    }
    Ok(format!(
        "toy flat {:?} compact {:?} recursive {:?}; 5 random corpora agree",
        relation_counts(&toy, Model::Flat),
        relation_counts(&toy, Model::Compact),
        relation_counts(&toy, Model::Recursive)
    ))
}

fn published_ratios() -> Outcome {
    let stats = |model: Model, count: u64| ModelStats {
        model,
        revisions: 1,
        contents: 0,
        directories: 0,
        relations: vec![RelationCount { name: "total", count }],
        submodule_edges: 0,
        approximate: false,
        fingerprint: "published".into(),
    };
    let report = compare_models(&[
        stats(Model::Flat, 654_390_826_907),
        stats(Model::Recursive, 2_607_846_338),
        stats(Model::Compact, 19_259_600_495),
    ])
    .map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for (num, den, want) in [(Model::Flat, Model::Compact, 34.0), (Model::Flat, Model::Recursive, 251.0), (Model::Compact, Model::Recursive, 7.39)] {
        let got = report.get(num, den).ok_or("missing ratio")?;
        ensure(((got.value - want) / want).abs() <= 0.005, || format!("{num}/{den} = {}, want {want}", got.value))?;
        out.push(format!("{num}/{den}={}", got.display()));
    }
    Ok(out.join(" "))
}

fn growth_fit() -> Outcome {
    let mut out = Vec::new();
    for (rate, months) in [(0.27, 30.8), (0.37, 22.5)] {
        let p = GenParams {
            seed: 42,
            n_origins: 2000,
            revisions_per_origin: RevisionCount::Uniform(20, 60),
            years: 20.0,
            rate,
            slots: 2,
            fork_probability: 0.0,
            release_probability: 0.0,
            ..GenParams::default()
        };
        let store = memory_store();
        let report = into_store(&store, |s| generate(s, &p)).unwrap();
        let series = original_growth_series(&store.read().unwrap(), TimestampFilter::after_epoch(), BucketWidth::Months(1))
            .map_err(|e| e.to_string())?;
        let fit = fit_exponential(&series.revisions, None).map_err(|e| e.to_string())?;
        ensure(((fit.r - rate) / rate).abs() <= 0.05, || format!("rate {rate}: fitted {:.4}", fit.r))?;
        let expected = doubling_months(rate);
        ensure((expected - months).abs() < 0.05, || format!("doubling for {rate} is {expected:.2}"))?;
        ensure(((fit.doubling_months - expected) / expected).abs() <= 0.05, || {
            format!("rate {rate}: doubling {:.1} months", fit.doubling_months)
        })?;
        out.push(format!(
            "r={rate}: fitted {:.4}, doubling {:.1} months ({} revisions)",
            fit.r, fit.doubling_months, report.revisions
        ));
    }
    Ok(out.join("; "))
}

/// Largest k kept when fitting sampled data; beyond it most bins hold a
/// handful of draws and dropping empty bins flattens the tail.
const SAMPLED_KMAX: u64 = 100;

fn power_law() -> Outcome {
    let mut out = Vec::new();
    for alpha in [-1.5f64, -1.9, -2.2] {
        let exact: Vec<(f64, f64)> = (1..=1000).map(|k| (k as f64, 1e9 * (k as f64).powf(alpha))).collect();
        let fit = fit_power_law_points(&exact).map_err(|e| e.to_string())?;
        ensure((fit.alpha - alpha).abs() <= 1e-6, || format!("exact {alpha}: {}", fit.alpha))?;

        let mut rng = ChaCha8Rng::seed_from_u64(alpha.to_bits());
        let zipf = Zipf::new(1e6, -alpha).unwrap();
        let mut h = Histogram::default();
        for _ in 0..100_000 {
            h.add(zipf.sample(&mut rng) as u64, 1);
        }
        let sampled = fit_power_law(&h, (1, SAMPLED_KMAX)).map_err(|e| e.to_string())?;
        ensure((sampled.alpha - alpha).abs() <= 0.1, || format!("sampled {alpha}: {}", sampled.alpha))?;
        out.push(format!("{alpha}: exact {:.9}, sampled {:.3}", fit.alpha, sampled.alpha));
    }
    Ok(out.join("; "))
}

fn git_fidelity() -> Outcome {
    if Command::new("git").arg("--version").output().is_err() {
        return Err("git executable not found".into());
    }
    let dir = tempfile::tempdir().unwrap();
    let repo = dir.path().join("repo");
    let commits = common::scripted_git_repo(&repo);
    let store = memory_store();
    let (first, v1) = ingest_git_repository(&store, &repo, "https://example.org/scripted", 1_600_000_000)
        .map_err(|e| e.to_string())?;
    let view = store.read().unwrap();
    for (oid, _) in &commits {
        let id = NodeId::from_hex(NodeKind::Revision, oid).unwrap();
        ensure(view.contains_node(&id).unwrap(), || format!("revision {oid} missing"))?;
        let tree = common::git_output(&repo, &["rev-parse", &format!("{oid}^{{tree}}")]);
        ensure(view.get_revision(&id).unwrap().root.to_hex() == tree, || format!("tree of {oid}"))?;
    }
    let tag = common::git_output(&repo, &["rev-parse", "v1"]);
    let release = NodeId::from_hex(NodeKind::Release, &tag).unwrap();
    ensure(view.contains_node(&release).unwrap(), || format!("release {tag} missing"))?;
    let DagNode::Snapshot(snap) = view.get_node(&v1.snapshot).unwrap() else { return Err("visit without snapshot".into()) };
    let branches: Vec<String> = snap.branches.keys().map(|k| String::from_utf8_lossy(k).into_owned()).collect();
    ensure(branches == ["refs/heads/feature", "refs/heads/main", "refs/tags/v1"], || format!("branches {branches:?}"))?;
    drop(view);

    let (again, v2) = ingest_git_repository(&store, &repo, "https://example.org/scripted", 1_600_000_100)
        .map_err(|e| e.to_string())?;
    ensure(again.inserted_total() == 0, || format!("re-ingest inserted {}", again.inserted_total()))?;
    ensure(v1.snapshot == v2.snapshot, || "snapshot not reused".into())?;
    Ok(format!(
        "{} commits, 1 tag, {} nodes; re-ingest added 0 nodes",
        commits.len(),
        first.inserted_total()
    ))
}

fn incrementality() -> Outcome {
    let mut splits = 0;
    for seed in 0..24u64 {
        let make = || {
            let s = memory_store();
            if seed % 4 == 0 {
                let p = GenParams { seed, n_origins: 6, revisions_per_origin: RevisionCount::Uniform(5, 20), ..GenParams::default() };
                into_store(&s, |sink| generate(sink, &p)).unwrap();
            } else {
                common::random_corpus(&s, seed, 80);
            }
            s
        };
        let single = make();
        let split = make();
        let times: Vec<i64> = split
            .read()
            .unwrap()
            .revision_refs(TimestampFilter::ALL)
            .unwrap()
            .map(|r| r.unwrap().timestamp)
            .collect();
        let t_cut = times[(seed as usize * 7919) % times.len()];
        for m in Model::ALL {
            build(&single, m, &BuildOptions::default()).unwrap();
            build(&split, m, &BuildOptions { filter: TimestampFilter::ALL.until(t_cut), ..BuildOptions::default() }).unwrap();
            build(&split, m, &BuildOptions { chunk: 5, ..BuildOptions::default() }).unwrap();
            ensure(common::index_dump(&single, m) == common::index_dump(&split, m), || format!("seed {seed} {m}: relations differ"))?;
            let a = ModelState::load(&single.read().unwrap(), m).unwrap();
            let b = ModelState::load(&split.read().unwrap(), m).unwrap();
            ensure(a == b, || format!("seed {seed} {m}: state differs"))?;
            splits += 1;
        }
    }
    Ok(format!("{splits} split builds identical to single-session builds"))
}

const STREAM_REVISIONS: usize = 1000;
const STREAM_PATHS: usize = 1000;
const MEMORY_CEILING_KB: u64 = 64 * 1024;

fn peak_rss_kb(pid: u32) -> Option<u64> {
    let status = std::fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn streaming_store(path: &Path) -> NodeId {
    let store = Store::open(path, OpenMode::Create).unwrap();
    let content = into_store(&store, |s| {
        let c = s.node(&DagNode::Content(prov_core::dag::Content::from_bytes(b"everywhere\n".to_vec(), s.algo())))?;
        let entries = (0..STREAM_PATHS).map(|i| DirectoryEntry::file(format!("f{i:04}"), c)).collect();
        let inner = s.node(&DagNode::Directory(Directory::new(entries)?))?;
        let mut parents = Vec::new();
        for i in 0..STREAM_REVISIONS {
            let root = s.node(&DagNode::Directory(Directory::new(vec![DirectoryEntry::dir(format!("v{i}"), inner)])?))?;
            let rev = Revision::simple(root, parents, "dev <dev@example.org>", 1_000 + i as i64, &format!("r{i}"));
            parents = vec![s.node(&DagNode::Revision(rev))?];
        }
        Ok(c)
    })
    .unwrap();
    build(&store, Model::Compact, &BuildOptions::default()).unwrap();
    content
}

fn streaming() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store");
    let content = streaming_store(&path);
    let start = Instant::now();
    let mut child = Command::new(env!("CARGO_BIN_EXE_prov"))
        .env("RUST_LOG", "warn")
        .arg("--store")
        .arg(&path)
        .args(["query", "all", "--model", "compact", "--content", &content.to_string()])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let pid = child.id();
    let mut reader = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    let mut lines = 0u64;
    let mut first_at = None;
    let mut peak = 0;
    while reader.read_line(&mut line).unwrap() > 0 {
        if first_at.is_none() {
            first_at = Some(start.elapsed());
        }
        lines += 1;
        if lines.is_multiple_of(20_000) {
            peak = peak.max(peak_rss_kb(pid).unwrap_or(0));
        }
        line.clear();
    }
    let status = child.wait().unwrap();
    let total = start.elapsed();
    ensure(status.success(), || format!("exit {status}"))?;
    let want = (STREAM_REVISIONS * STREAM_PATHS) as u64;
    ensure(lines == want, || format!("{lines} records, want {want}"))?;
    let first_at = first_at.unwrap_or(total);
    ensure(first_at < Duration::from_secs(1), || format!("first record after {first_at:?}"))?;
    ensure(peak > 0, || "could not sample memory".into())?;
    ensure(peak <= MEMORY_CEILING_KB, || format!("peak RSS {peak} kB over {MEMORY_CEILING_KB} kB"))?;
    Ok(format!(
        "{lines} records, first after {:.0} ms, all in {:.1} s, peak RSS {} MB (ceiling {} MB)",
        first_at.as_secs_f64() * 1e3,
        total.as_secs_f64(),
        peak / 1024,
        MEMORY_CEILING_KB / 1024
    ))
}

fn sloc_pipeline() -> Outcome {
    let table: [(&[u8], Option<&[u8]>); 3] = [(b"  int x = 1;  ", Some(b"intx=1")), (b";;", None), (b"a=b ;", Some(b"a=b"))];
    for (input, want) in table {
        let got = normalize_sloc(input);
        ensure(got.as_deref() == want, || format!("normalize {:?} gave {got:?}", String::from_utf8_lossy(input)))?;
    }
    let plan = |v: &[(&str, usize)]| -> Vec<PlantedLine> {
        v.iter().map(|&(text, contents)| PlantedLine { text: text.into(), contents }).collect()
    };
    let plans = [
        plan(&[("returnerr", 5), ("#include<stdio.h>", 12), ("x=x+1", 2), ("if(err)gotofail", 1)]),
        plan(&[("for(i=0;i<n;i++){", 30), ("}else{", 30), ("inta", 7), ("staticconstcharversion[]=\"1.0\"", 3)]),
        plan(&[("breakloop", 1), ("longer_line_with_many_characters_in_it(a,b,c,d)", 9)]),
    ];
    let mut lines = 0;
    for (i, plan) in plans.iter().enumerate() {
        let store = memory_store();
        let n = 40;
        let planted = into_store(&store, |s| planted_sloc(s, 100 + i as u64, n, plan, 1_000)).unwrap();
        let sample = SlocSample {
            extensions: vec![".c".into()],
            sample: Sample { hash_prefix: None, size: Some((100, 1_000_000)) },
            ..SlocSample::default()
        };
        let report = sloc_multiplication(&store.read().unwrap(), &sample).map_err(|e| e.to_string())?;
        ensure(report.histogram.counts == planted.expected, || {
            format!("plan {i}: histogram {:?}, planted {:?}", report.histogram.counts, planted.expected)
        })?;
        let lengths: &BTreeMap<usize, u64> = &report.lengths;
        ensure(*lengths == planted.expected_lengths, || format!("plan {i}: length distribution differs"))?;
        lines += planted.expected.values().sum::<u64>();
    }
    Ok(format!("example table ok; 3 planted corpora, {lines} distinct lines counted exactly"))
}
