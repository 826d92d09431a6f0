use std::collections::BTreeSet;

use proptest::prelude::*;

use codepair::corpus::{bucket_by_length, count_tokens, split_ids, BugType, LengthBuckets};
use codepair::embedding::local_embed;
use codepair::eval::{length_bucket_report, pair_f1, pair_metrics, PairOutcome};
use codepair::llm::{parse_binary_verdict, parse_pair_verdict, PairChoice};
use codepair::retrieval::{build_index, l2_distance};

fn choice() -> impl Strategy<Value = PairChoice> {
    prop_oneof![Just(PairChoice::A), Just(PairChoice::B), Just(PairChoice::Unparseable)]
}

fn outcomes() -> impl Strategy<Value = Vec<PairOutcome>> {
    prop::collection::vec((choice(), prop::bool::ANY, 0usize..4000, 0usize..4), 1..60).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (p, a, t, b))| {
                let truth = if a { PairChoice::A } else { PairChoice::B };
                PairOutcome::new(format!("p{i}"), p, truth, t, BugType::ALL[b])
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn split_partitions_and_ignores_order(n in 1usize..400, seed in any::<u64>(), rot in any::<usize>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
        let s = split_ids(ids.clone(), seed, (0.8, 0.1, 0.1)).unwrap();
        let all: BTreeSet<_> = s.train.iter().chain(&s.valid).chain(&s.test).cloned().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(s.train.len() + s.valid.len() + s.test.len(), n);
        prop_assert_eq!(s.train.len(), n * 8 / 10);
        let mut shuffled = ids;
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        prop_assert_eq!(split_ids(shuffled, seed, (0.8, 0.1, 0.1)).unwrap(), s);
    }

    #[test]
    fn token_count_is_additive_over_whitespace(a in "[ -~\n\t]{0,80}", b in "[ -~\n\t]{0,80}") {
        prop_assert_eq!(count_tokens(&format!("{a} {b}")), count_tokens(&a) + count_tokens(&b));
    }

    #[test]
    fn local_embedding_is_unit_or_zero(text in "\\PC{0,200}", dim in 16usize..300) {
        let v = local_embed(&text, dim);
        prop_assert_eq!(v.len(), dim);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let significant = text.chars().filter(|c| !c.is_whitespace()).count();
        if significant >= 3 {
            prop_assert!((norm - 1.0).abs() < 1e-12);
        } else {
            prop_assert_eq!(norm, 0.0);
        }
    }

    #[test]
    fn pair_f1_is_monotone_and_dominates_accuracy(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(pair_f1(lo) <= pair_f1(hi));
        prop_assert!(pair_f1(a) >= a - 1e-15);
        prop_assert!(pair_f1(a) <= 1.0);
    }

    #[test]
    fn buckets_cover_every_item(
        tokens in prop::collection::vec(0usize..5000, 0..100),
        mut bounds in prop::collection::btree_set(1usize..4000, 1..4),
    ) {
        let bounds: Vec<usize> = std::mem::take(&mut bounds).into_iter().collect();
        let grouped = bucket_by_length(tokens.iter().enumerate().map(|(i, t)| (format!("i{i}"), *t)), &bounds).unwrap();
        prop_assert_eq!(grouped.len(), LengthBuckets::new(&bounds).unwrap().len());
        prop_assert_eq!(grouped.values().map(Vec::len).sum::<usize>(), tokens.len());
    }

    #[test]
    fn bucket_report_sums_to_overall(outs in outcomes()) {
        let report = length_bucket_report(&outs, &[250, 2000]).unwrap();
        prop_assert_eq!(report.values().map(|s| s.n).sum::<usize>(), outs.len());
        let correct: usize = report.values().map(|s| s.correct).sum();
        prop_assert_eq!(correct, outs.iter().filter(|o| o.correct).count());
    }

    #[test]
    fn metrics_ignore_outcome_order(outs in outcomes(), rot in any::<usize>()) {
        let mut moved = outs.clone();
        let n = moved.len();
        moved.rotate_left(rot % n);
        moved.reverse();
        prop_assert_eq!(pair_metrics(&outs).unwrap(), pair_metrics(&moved).unwrap());
    }

    #[test]
    fn verdict_parsers_are_total(text in "\\PC{0,120}") {
        let _ = parse_pair_verdict(&text);
        let _ = parse_binary_verdict(&text);
    }

    #[test]
    fn index_query_matches_sorting(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..40),
        q in prop::collection::vec(-1.0f64..1.0, 4),
        k in 1usize..50,
    ) {
        let index = build_index(rows.iter().enumerate().map(|(i, v)| (format!("r{i}"), v.clone()))).unwrap();
        let got = index.query(&q, k).unwrap();
        let mut want: Vec<(f64, usize)> = rows.iter().enumerate().map(|(i, v)| (l2_distance(&q, v).unwrap(), i)).collect();
        want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        want.truncate(k);
        prop_assert_eq!(got.iter().map(|n| n.ordinal).collect::<Vec<_>>(), want.iter().map(|w| w.1).collect::<Vec<_>>());
    }
}
