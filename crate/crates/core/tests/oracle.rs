mod common;

use common::{build_all, check_against_oracle, index_dump, random_corpus, toy_store};
use prov_core::dag::{DagRead, TimestampFilter};
use prov_core::gen::{generate, into_store, GenParams, RevisionCount};
use prov_core::provenance::{build, BuildOptions, Model, ModelState};
use prov_core::{HashAlgo, Store};
use proptest::prelude::*;

#[test]
fn toy_corpus_matches_oracle() {
    let store = toy_store();
    build_all(&store);
    assert_eq!(check_against_oracle(&store), Ok(5));
}

#[test]
fn generated_corpora_match_oracle() {
    for seed in 1..=3 {
        let store = Store::in_memory(HashAlgo::Sha1).unwrap();
        let p = GenParams {
            seed,
            n_origins: 4,
            revisions_per_origin: RevisionCount::Uniform(10, 30),
            slots: 10,
            fork_probability: 0.5,
            ..GenParams::default()
        };
        into_store(&store, |s| generate(s, &p)).unwrap();
        build_all(&store);
        check_against_oracle(&store).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_corpora_match_oracle(seed in any::<u64>(), revisions in 1usize..40) {
        let store = Store::in_memory(HashAlgo::Sha1).unwrap();
        random_corpus(&store, seed, revisions);
        build_all(&store);
        prop_assert!(check_against_oracle(&store).is_ok(), "{:?}", check_against_oracle(&store));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn split_build_equals_single_build(seed in any::<u64>(), revisions in 2usize..40, cut in 0.0f64..1.0) {
        let single = Store::in_memory(HashAlgo::Sha1).unwrap();
        let split = Store::in_memory(HashAlgo::Sha1).unwrap();
        random_corpus(&single, seed, revisions);
        random_corpus(&split, seed, revisions);
        let times: Vec<i64> = split
            .read()
            .unwrap()
            .revision_refs(TimestampFilter::ALL)
            .unwrap()
            .map(|r| r.unwrap().timestamp)
            .collect();
        let t_cut = times[((times.len() - 1) as f64 * cut) as usize];
        for m in Model::ALL {
            build(&single, m, &BuildOptions::default()).unwrap();
            let first = BuildOptions { filter: TimestampFilter::ALL.until(t_cut), ..BuildOptions::default() };
            build(&split, m, &first).unwrap();
            let rest = build(&split, m, &BuildOptions { chunk: 3, ..BuildOptions::default() }).unwrap();
            prop_assert!(!rest.state.approximate);
            prop_assert_eq!(index_dump(&single, m), index_dump(&split, m));
            prop_assert_eq!(
                ModelState::load(&single.read().unwrap(), m).unwrap(),
                ModelState::load(&split.read().unwrap(), m).unwrap()
            );
        }
    }
}
