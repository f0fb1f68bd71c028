mod common;

use std::collections::HashSet;

use common::oracle::{self, random_instance, Span};
use esco_pretrain::metrics::{
    bucket_f1, decode_bio, entity_span_f1, evaluate_spans, io, mrr, surface_span_f1, surface_span_f1_with, weighted_macro_f1,
    Bucket, LabeledSpan, SurfaceOptions,
};
use proptest::prelude::*;

fn decode_all(tags: &[Vec<String>], tokens: &[Vec<String>]) -> Vec<Vec<LabeledSpan>> {
    tags.iter().zip(tokens).map(|(t, w)| decode_bio(t, w).unwrap()).collect()
}

fn as_tuples(spans: &[Vec<LabeledSpan>]) -> Vec<Vec<Span>> {
    spans
        .iter()
        .map(|v| v.iter().map(|s| (s.start, s.end, s.label.clone(), s.surface.clone())).collect())
        .collect()
}

const BUCKET_RANGES: [(Bucket, usize, usize); 6] = [
    (Bucket::L1to2, 1, 2),
    (Bucket::L3to4, 3, 4),
    (Bucket::L5to6, 5, 6),
    (Bucket::L7to8, 7, 8),
    (Bucket::L9to10, 9, 10),
    (Bucket::Over10, 11, usize::MAX),
];

#[test]
fn span_metrics_match_brute_force() {
    for seed in 0..1000 {
        let inst = random_instance(seed);
        let gold = decode_all(&inst.gold, &inst.tokens);
        let pred = decode_all(&inst.pred, &inst.tokens);
        let og = oracle::spans_of(&inst.gold, &inst.tokens);
        let op = oracle::spans_of(&inst.pred, &inst.tokens);
        assert_eq!(as_tuples(&gold), og, "decode, seed {seed}");
        assert_eq!(as_tuples(&pred), op, "decode, seed {seed}");

        let e = entity_span_f1(&gold, &pred).unwrap();
        assert_eq!((e.precision, e.recall, e.f1), oracle::entity_prf(&og, &op), "entity, seed {seed}");
        for case_sensitive in [true, false] {
            let s = surface_span_f1_with(&gold, &pred, SurfaceOptions { case_sensitive }).unwrap();
            assert_eq!(
                (s.precision, s.recall, s.f1),
                oracle::surface_prf(&og, &op, case_sensitive),
                "surface, seed {seed}"
            );
        }
        let b = bucket_f1(&gold, &pred).unwrap();
        for (bucket, lo, hi) in BUCKET_RANGES {
            assert_eq!(b.get(bucket).map(|p| p.f1), oracle::bucket_f1(&og, &op, lo, hi), "{bucket:?}, seed {seed}");
        }
    }
}

#[test]
fn classification_and_ranking_match_brute_force() {
    for seed in 0..1000 {
        let (g, p) = oracle::random_labels(seed);
        assert_eq!(weighted_macro_f1(&g, &p).unwrap(), oracle::weighted_macro_f1(&g, &p), "seed {seed}");
        let (rankings, relevant) = oracle::random_rankings(seed);
        assert_eq!(mrr(&rankings, &relevant).unwrap(), oracle::mrr(&rankings, &relevant), "seed {seed}");
    }
}

fn spans(list: &[(usize, usize, &str, &str)]) -> Vec<LabeledSpan> {
    list.iter()
        .map(|&(start, end, label, surface)| LabeledSpan {
            start,
            end,
            label: label.into(),
            surface: surface.into(),
        })
        .collect()
}

#[test]
fn surface_rewards_diversity() {
    // Three gold mentions of one skill and one of another: finding only the
    // frequent one scores 0.75 recall per entity but 0.5 per surface type.
    let gold = vec![
        spans(&[(0, 1, "Skill", "java")]),
        spans(&[(0, 1, "Skill", "java"), (2, 3, "Skill", "rust")]),
        spans(&[(1, 2, "Skill", "java")]),
    ];
    let pred = vec![
        spans(&[(0, 1, "Skill", "java")]),
        spans(&[(0, 1, "Skill", "java")]),
        spans(&[(1, 2, "Skill", "java")]),
    ];
    let e = entity_span_f1(&gold, &pred).unwrap();
    let s = surface_span_f1(&gold, &pred).unwrap();
    assert!((e.recall - 0.75).abs() < 1e-12);
    assert!((s.recall - 0.5).abs() < 1e-12);
    assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn bucket_boundaries_are_exact() {
    for len in 1..=12 {
        let expected = match len {
            1 | 2 => "1-2",
            3 | 4 => "3-4",
            5 | 6 => "5-6",
            7 | 8 => "7-8",
            9 | 10 => "9-10",
            _ => "11+",
        };
        assert_eq!(Bucket::of_len(len).name(), expected, "length {len}");
        let gold = vec![spans(&[(0, len, "Skill", "x")])];
        let b = bucket_f1(&gold, &gold).unwrap();
        for (bucket, lo, hi) in BUCKET_RANGES {
            let want = (lo..=hi).contains(&len).then_some(1.0);
            assert_eq!(b.get(bucket).map(|p| p.f1), want);
        }
    }
}

#[test]
fn report_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.txt");
    let pred = dir.path().join("pred.txt");
    std::fs::write(&gold, "Experience\tO\nwith\tO\nJava\tB-Skill\n\nteam\tB-Skill\nwork\tI-Skill\n").unwrap();
    std::fs::write(&pred, "Experience\tO\nwith\tO\nJava\tB-Skill\n\nteam\tB-Skill\nwork\tO\n").unwrap();
    let g = io::read_tagged_file(&gold).unwrap();
    let p = io::read_tagged_file(&pred).unwrap();
    let report = evaluate_spans(&g, &p, SurfaceOptions::default()).unwrap();
    let span = report.span.unwrap();
    assert_eq!(span.entity_f1.precision, 0.5);
    assert_eq!(span.entity_f1.recall, 0.5);
    assert_eq!(span.bucket_f1["1-2"], Some(0.5));
    assert_eq!(span.bucket_f1["3-4"], None);
    assert_eq!(span.unique_entity_ratio, Some(1.0));
}

fn tagging() -> impl Strategy<Value = (Vec<String>, Vec<String>, Vec<String>)> {
    (0usize..20).prop_flat_map(|n| {
        let tag = prop_oneof![
            Just("O".to_owned()),
            prop::sample::select(vec!["B-A", "B-B", "I-A", "I-B"]).prop_map(str::to_owned)
        ];
        let word = prop::sample::select(vec!["a", "b", "c"]).prop_map(str::to_owned);
        (
            prop::collection::vec(word, n),
            prop::collection::vec(tag.clone(), n),
            prop::collection::vec(tag, n),
        )
    })
}

proptest! {
    #[test]
    fn scores_are_bounded((tokens, g, p) in tagging()) {
        let gold = vec![decode_bio(&g, &tokens).unwrap()];
        let pred = vec![decode_bio(&p, &tokens).unwrap()];
        for prf in [entity_span_f1(&gold, &pred).unwrap(), surface_span_f1(&gold, &pred).unwrap()] {
            for x in [prf.precision, prf.recall, prf.f1] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
        prop_assert_eq!(entity_span_f1(&gold, &gold).unwrap().f1, 1.0);
        prop_assert_eq!(surface_span_f1(&gold, &gold).unwrap().f1, 1.0);
    }

    #[test]
    fn unique_surfaces_make_surface_equal_entity((tokens, g, p) in tagging()) {
        // Distinct tokens give every span a distinct surface form.
        let tokens: Vec<String> = (0..tokens.len()).map(|i| format!("w{i}")).collect();
        let gold = vec![decode_bio(&g, &tokens).unwrap()];
        let pred = vec![decode_bio(&p, &tokens).unwrap()];
        prop_assert_eq!(entity_span_f1(&gold, &pred).unwrap(), surface_span_f1(&gold, &pred).unwrap());
    }

    #[test]
    fn dedup_never_adds_true_positives((tokens, g, p) in tagging()) {
        let gold = vec![decode_bio(&g, &tokens).unwrap()];
        let pred = vec![decode_bio(&p, &tokens).unwrap()];
        let types: HashSet<(String, String)> =
            pred[0].iter().map(|s| (s.surface.clone(), s.label.clone())).collect();
        let s = surface_span_f1(&gold, &pred).unwrap();
        let e = entity_span_f1(&gold, &pred).unwrap();
        let tp_types = (s.precision * types.len() as f64).round();
        let tp_spans = (e.precision * pred[0].len() as f64).round();
        prop_assert!(tp_types <= tp_spans);
    }

    #[test]
    fn mrr_is_reciprocal_rank_of_single_relevant(n in 1usize..10, k in 0usize..10) {
        let ranking: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let relevant: HashSet<String> = [k.to_string()].into_iter().collect();
        let want = if k < n { 1.0 / (k + 1) as f64 } else { 0.0 };
        prop_assert_eq!(mrr(&[ranking], &[relevant]).unwrap(), want);
    }
}
