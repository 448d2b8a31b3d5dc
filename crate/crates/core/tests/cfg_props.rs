//! Property tests for loop extraction and loop relations.

mod common;

use common::*;
use instmeter::cfg::{extract_loops, loop_relation, relation_graph, Cfg, RelationKind};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn loops_match_definition(seed in any::<u64>(), size in 2usize..=16) {
        let cfg = random_reducible_cfg(seed, size);
        let got: Vec<_> = extract_loops(&cfg)
            .into_iter()
            .map(|l| (l.header, l.back_edge.from, l.body))
            .collect();
        prop_assert_eq!(got, oracle_loops(&cfg));
    }

    #[test]
    fn header_dominates_its_body(seed in any::<u64>()) {
        let cfg = random_reducible_cfg(seed, 12);
        for lp in extract_loops(&cfg) {
            for &n in &lp.body {
                prop_assert!(dominates(&cfg, lp.header, n));
            }
            prop_assert!(lp.body.contains(&lp.back_edge.from));
        }
    }

    #[test]
    fn ids_are_dense_and_ordered(seed in any::<u64>()) {
        let loops = extract_loops(&random_reducible_cfg(seed, 12));
        for (i, lp) in loops.iter().enumerate() {
            prop_assert_eq!(lp.id as usize, i + 1);
        }
        let keys: Vec<_> = loops.iter().map(|l| (l.header, l.back_edge.from)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        prop_assert_eq!(keys, sorted);
    }

    #[test]
    fn relation_graph_merges_equal_bodies(seed in any::<u64>()) {
        let loops = extract_loops(&random_reducible_cfg(seed, 12));
        let g = relation_graph(&loops);
        let merged: usize = g.merged.values().map(Vec::len).sum();
        prop_assert_eq!(g.len() + merged, loops.len());
        for (rep, others) in &g.merged {
            let body = &loops[*rep as usize - 1].body;
            for o in others {
                prop_assert!(o > rep);
                prop_assert_eq!(&loops[*o as usize - 1].body, body);
            }
        }
        // every related pair of representatives carries exactly one edge
        for (i, &a) in g.loop_ids.iter().enumerate() {
            for &b in &g.loop_ids[i + 1..] {
                let kind = loop_relation(&loops[a as usize - 1], &loops[b as usize - 1]).kind;
                let n = g.edges.iter().filter(|e| (e.a.min(e.b), e.a.max(e.b)) == (a, b)).count();
                prop_assert_eq!(n, usize::from(kind != RelationKind::Disjoint));
                prop_assert!(kind != RelationKind::Equal);
            }
        }
    }
}

#[test]
fn generated_cfgs_round_trip_through_json() {
    for seed in 0..50 {
        let cfg = random_reducible_cfg(seed, 12);
        let back = Cfg::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back.edges(), cfg.edges());
        assert_eq!(extract_loops(&back), extract_loops(&cfg));
    }
}

#[test]
fn generator_produces_shared_header_loops() {
    // `continue` edges give one header two back edges; make sure the
    // corpus exercises that case
    let found = (0..200).any(|seed| {
        let loops = extract_loops(&random_reducible_cfg(seed, 12));
        loops.windows(2).any(|w| w[0].header == w[1].header)
    });
    assert!(found);
}
