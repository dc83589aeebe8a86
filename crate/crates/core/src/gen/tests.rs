use super::*;
use crate::dag::DagRead;
use crate::id::NodeKind;

fn small(seed: u64) -> GenParams {
    GenParams {
        seed,
        n_origins: 6,
        revisions_per_origin: RevisionCount::Uniform(5, 15),
        slots: 8,
        max_multiplicity: 40,
        ..GenParams::default()
    }
}

fn dump_bytes(p: &GenParams) -> Vec<u8> {
    let mut sink = DumpSink::new(Vec::new(), HashAlgo::Sha1);
    generate(&mut sink, p).unwrap();
    sink.finish().unwrap()
}

#[test]
fn toy_corpus_shape() {
    let store = Store::in_memory(HashAlgo::Sha1).unwrap();
    let t = into_store(&store, toy).unwrap();
    let v = store.read().unwrap();
    assert_eq!(v.count_kind(NodeKind::Content).unwrap(), 2);
    assert_eq!(v.count_kind(NodeKind::Directory).unwrap(), 2);
    assert_eq!(v.count_kind(NodeKind::Revision).unwrap(), 3);
    assert_eq!(v.get_revision(&t.b).unwrap().root, t.d2);
    assert_eq!(v.get_revision(&t.c).unwrap().parents, vec![t.b]);
    assert_eq!(v.get_revision(&t.a).unwrap().timestamp(), 100);
}

#[test]
fn extreme_corpora_counts() {
    let store = Store::in_memory(HashAlgo::Sha1).unwrap();
    let shared = into_store(&store, |s| extreme_shared_root(s, 7, 3, 1000)).unwrap();
    assert_eq!(shared.roots.len(), 1);
    assert_eq!(shared.contents.len(), 3);
    let v = store.read().unwrap();
    assert_eq!(v.count_kind(NodeKind::Revision).unwrap(), 7);
    assert_eq!(v.count_kind(NodeKind::Directory).unwrap(), 1);
    drop(v);

    let store = Store::in_memory(HashAlgo::Sha1).unwrap();
    let dis = into_store(&store, |s| extreme_disjoint(s, 4, 2, true, 0)).unwrap();
    assert_eq!(dis.contents.len(), 4 * 3);
    let v = store.read().unwrap();
    assert_eq!(v.count_kind(NodeKind::Directory).unwrap(), 8);
    assert_eq!(v.count_kind(NodeKind::Content).unwrap(), 12);
}

#[test]
fn same_seed_same_bytes() {
    let a = dump_bytes(&small(7));
    assert_eq!(a, dump_bytes(&small(7)));
    assert_ne!(a, dump_bytes(&small(8)));
}

#[test]
fn report_matches_store() {
    let p = small(3);
    let store = Store::in_memory(HashAlgo::Sha1).unwrap();
    let report = into_store(&store, |s| generate(s, &p)).unwrap();
    let v = store.read().unwrap();
    assert_eq!(report.revisions, v.count_kind(NodeKind::Revision).unwrap());
    assert_eq!(report.contents, v.count_kind(NodeKind::Content).unwrap());
    assert_eq!(report.directories, v.count_kind(NodeKind::Directory).unwrap());
    assert_eq!(report.releases, v.count_kind(NodeKind::Release).unwrap());
    assert_eq!(report.origins, 6);
    assert_eq!(v.visits().unwrap().len() as u64, report.visits);
    let end = p.start_time + (p.years * 365.25 * 86400.0) as i64;
    for r in v.iter_revisions_chronological(crate::dag::TimestampFilter::ALL).unwrap() {
        let t = r.unwrap().1.timestamp();
        assert!((p.start_time..=end).contains(&t), "{t}");
    }
}

#[test]
fn contents_are_shared_across_revisions() {
    let p = GenParams { n_origins: 3, revisions_per_origin: RevisionCount::Fixed(30), slots: 4, ..small(11) };
    let store = Store::in_memory(HashAlgo::Sha1).unwrap();
    let report = into_store(&store, |s| generate(s, &p)).unwrap();
    // Without reuse every slot of every revision would hold a fresh content.
    assert!(report.contents < report.revisions * p.slots as u64 / 2, "{report:?}");
}

#[test]
fn revision_count_round_trip() {
    for s in ["fixed:10", "uniform:3-9", "geometric:0.25"] {
        let c: RevisionCount = s.parse().unwrap();
        assert_eq!(c.to_string(), s);
    }
    assert!("uniform:3".parse::<RevisionCount>().is_err());
}

#[test]
fn invalid_params_rejected() {
    for p in [
        GenParams { rate: 0.0, ..GenParams::default() },
        GenParams { dup_alpha: -0.5, ..GenParams::default() },
        GenParams { content_size: (10, 5), ..GenParams::default() },
        GenParams { fork_probability: 1.5, ..GenParams::default() },
    ] {
        assert!(p.validate().is_err());
    }
}

#[test]
fn planted_plan_is_checked() {
    let mut sink = DumpSink::new(Vec::new(), HashAlgo::Sha1);
    let plan = [PlantedLine { text: "a b".into(), contents: 2 }];
    assert!(planted_sloc(&mut sink, 1, 10, &plan, 0).is_err());
    let plan = [PlantedLine { text: "x=1".into(), contents: 2 }];
    assert!(planted_sloc(&mut sink, 1, 10, &plan, 0).is_err());
    let plan = [PlantedLine { text: "return0".into(), contents: 11 }];
    assert!(planted_sloc(&mut sink, 1, 10, &plan, 0).is_err());
}

#[test]
fn planted_truth_counts_plan_and_fillers() {
    let store = Store::in_memory(HashAlgo::Sha1).unwrap();
    let plan = [
        PlantedLine { text: "returnEXIT_SUCCESS".into(), contents: 9 },
        PlantedLine { text: "#include<stdio.h>".into(), contents: 9 },
        PlantedLine { text: "count++".into(), contents: 4 },
    ];
    let truth = into_store(&store, |s| planted_sloc(s, 5, 12, &plan, 10)).unwrap();
    assert_eq!(truth.expected[&9], 2);
    assert_eq!(truth.expected[&4], 1);
    assert!(truth.expected[&1] >= 36);
    let total: u64 = truth.expected.values().sum();
    assert_eq!(total, truth.expected_lengths.values().sum::<u64>());
}
