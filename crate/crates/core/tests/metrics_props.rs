mod common;

use common::{oracle_arcs, oracle_prefix, policies, random_sentence};
use memcost_core::corpus::{Region, Sentence, Token};
use memcost_core::metrics::{countable_arcs, prefix_counts, region_profile, ArcPolicy, SentenceProfile};
use proptest::prelude::*;

fn regions_from_cuts(n: usize, cuts: &[bool]) -> Vec<Region> {
    let mut regions = Vec::new();
    let mut start = 1;
    for t in 1..=n {
        if t == n || cuts[t - 1] {
            regions.push(Region {
                doc_id: "d".into(),
                sent_index: 1,
                region_index: regions.len() + 1,
                start,
                end: t,
            });
            start = t + 1;
        }
    }
    regions
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn prefix_counts_match_oracle(seed in any::<u64>()) {
        let s = random_sentence(seed, 15);
        for (_, policy) in policies() {
            let profile = SentenceProfile::compute(&s, &policy);
            for t in 0..=s.len() {
                let c = profile.at(t);
                prop_assert_eq!(
                    (c.predicted_heads, c.incomplete_deps, c.completions),
                    oracle_prefix(&s, &policy, t)
                );
            }
        }
    }

    #[test]
    fn completions_sum_to_arc_count(seed in any::<u64>()) {
        let s = random_sentence(seed, 15);
        for (_, policy) in policies() {
            let profile = SentenceProfile::compute(&s, &policy);
            let total: usize = profile.prefixes().iter().map(|c| c.completions).sum();
            let arcs = countable_arcs(&s, &policy);
            prop_assert_eq!(arcs.len(), oracle_arcs(&s, &policy).len());
            prop_assert_eq!(total, arcs.len());
        }
    }

    #[test]
    fn step_property(seed in any::<u64>()) {
        let s = random_sentence(seed, 15);
        for (_, policy) in policies() {
            let arcs = oracle_arcs(&s, &policy);
            let profile = SentenceProfile::compute(&s, &policy);
            for t in 1..=s.len() {
                let opened = arcs.iter().filter(|&&(h, d)| h.min(d) == t).count() as i64;
                let closed = arcs.iter().filter(|&&(h, d)| h.max(d) == t).count() as i64;
                let step = profile.at(t).incomplete_deps as i64 - profile.at(t - 1).incomplete_deps as i64;
                prop_assert_eq!(step, opened - closed);
            }
        }
    }

    #[test]
    fn heads_never_exceed_deps(seed in any::<u64>()) {
        let s = random_sentence(seed, 15);
        for (_, policy) in policies() {
            for c in SentenceProfile::compute(&s, &policy).prefixes() {
                prop_assert!(c.predicted_heads <= c.incomplete_deps);
            }
        }
    }

    #[test]
    fn region_aggregates_bound_token_values(
        seed in any::<u64>(),
        cuts in proptest::collection::vec(any::<bool>(), 15),
    ) {
        let s = random_sentence(seed, 15);
        let regions = regions_from_cuts(s.len(), &cuts);
        for (_, policy) in policies() {
            let profile = SentenceProfile::compute(&s, &policy);
            for (r, m) in regions.iter().zip(region_profile(&s, &regions, &policy)) {
                for t in r.start..=r.end {
                    let c = profile.at(t);
                    prop_assert!(m.predicted_heads <= c.predicted_heads);
                    prop_assert!(m.incomplete_deps <= c.incomplete_deps);
                    prop_assert!(m.completions >= c.completions);
                }
                prop_assert_eq!(m.additional_deps, m.incomplete_deps - m.predicted_heads);
            }
        }
    }

    #[test]
    fn excluding_right_adjuncts_never_increases_counts(seed in any::<u64>()) {
        let s = random_sentence(seed, 15);
        let on = ArcPolicy::head_medial();
        let off = ArcPolicy::head_final();
        let a = SentenceProfile::compute(&s, &on);
        let b = SentenceProfile::compute(&s, &off);
        for t in 0..=s.len() {
            prop_assert!(a.at(t).predicted_heads <= b.at(t).predicted_heads);
            prop_assert!(a.at(t).incomplete_deps <= b.at(t).incomplete_deps);
            prop_assert!(a.at(t).completions <= b.at(t).completions);
        }
    }

    #[test]
    fn boundary_prefixes_are_empty(seed in any::<u64>()) {
        let s = random_sentence(seed, 15);
        let policy = ArcPolicy::head_final();
        let start = prefix_counts(&s, &policy, 0).unwrap();
        let end = prefix_counts(&s, &policy, s.len()).unwrap();
        prop_assert_eq!((start.predicted_heads, start.incomplete_deps, start.completions), (0, 0, 0));
        prop_assert_eq!((end.predicted_heads, end.incomplete_deps), (0, 0));
    }
}

fn labelled(heads: &[usize], deprels: &[&str]) -> Sentence {
    let tokens = heads
        .iter()
        .zip(deprels)
        .enumerate()
        .map(|(i, (&h, &d))| Token::new(i + 1, "w", "w", "X", "NN", h, d))
        .collect();
    Sentence::new(tokens)
}

#[test]
fn ditransitive_prefix_before_verb() {
    let s = labelled(&[4, 4, 4, 0], &["nsubj", "iobj", "obj", "root"]);
    let c = prefix_counts(&s, &ArcPolicy::head_final(), 3).unwrap();
    assert_eq!((c.predicted_heads, c.incomplete_deps, c.completions), (1, 3, 0));
}

#[test]
fn nested_clauses_predict_three_heads() {
    let s = labelled(&[6, 5, 4, 5, 6, 0], &["nsubj", "nsubj", "nsubj", "ccomp", "ccomp", "root"]);
    let c = prefix_counts(&s, &ArcPolicy::head_final(), 3).unwrap();
    assert_eq!((c.predicted_heads, c.incomplete_deps, c.completions), (3, 3, 0));
}

#[test]
fn english_fragment_before_verb() {
    // The professor who supervises Alex will | teach
    let s = labelled(
        &[2, 7, 4, 2, 4, 7, 0],
        &["det", "nsubj", "nsubj", "acl:relcl", "obj", "aux", "root"],
    );
    for policy in [ArcPolicy::head_final(), ArcPolicy::head_medial()] {
        let c = prefix_counts(&s, &policy, 6).unwrap();
        assert_eq!((c.predicted_heads, c.incomplete_deps), (1, 2));
    }
}
