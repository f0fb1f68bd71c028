//! Brute-force reference implementations of the evaluation metrics and a
//! generator of random tagging instances.

use std::collections::HashSet;

use esco_pretrain::rng;
use rand::Rng as _;

/// `(start, end, label, surface)`.
pub type Span = (usize, usize, String, String);

pub const LABELS: [&str; 3] = ["Skill", "Knowledge", "Tech"];
const WORDS: [&str; 5] = ["java", "Java", "python", "team", "work"];

#[derive(Debug, Clone)]
pub struct Instance {
    pub tokens: Vec<Vec<String>>,
    pub gold: Vec<Vec<String>>,
    pub pred: Vec<Vec<String>>,
}

fn random_tag(r: &mut rng::Rng) -> String {
    match r.random_range(0..3) {
        0 => "O".to_owned(),
        1 => format!("B-{}", LABELS[r.random_range(0..LABELS.len())]),
        _ => format!("I-{}", LABELS[r.random_range(0..LABELS.len())]),
    }
}

/// Up to 4 sentences of up to 20 tokens drawn from a tiny vocabulary, so
/// surface forms repeat. Predictions are gold with a random fraction of tags
/// replaced.
pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng::derive(seed, "oracle", 0);
    let n_sent = r.random_range(1..=4);
    let noise: f64 = r.random();
    let mut inst = Instance {
        tokens: Vec::new(),
        gold: Vec::new(),
        pred: Vec::new(),
    };
    for _ in 0..n_sent {
        let len = r.random_range(0..=20);
        let tokens: Vec<String> = (0..len).map(|_| WORDS[r.random_range(0..WORDS.len())].to_owned()).collect();
        let gold: Vec<String> = (0..len).map(|_| random_tag(&mut r)).collect();
        let pred = gold
            .iter()
            .map(|t| if r.random::<f64>() < noise { random_tag(&mut r) } else { t.clone() })
            .collect();
        inst.tokens.push(tokens);
        inst.gold.push(gold);
        inst.pred.push(pred);
    }
    inst
}

fn label_of(tag: &str) -> Option<(&str, &str)> {
    tag.split_once('-')
}

/// Chunks by scanning for chunk starts and extending while the tag is `I-`
/// of the same label.
pub fn chunks(tags: &[String], tokens: &[String]) -> Vec<Span> {
    let mut out = Vec::new();
    for i in 0..tags.len() {
        let Some((prefix, label)) = label_of(&tags[i]) else { continue };
        let continues = i > 0 && matches!(label_of(&tags[i - 1]), Some((_, prev)) if prev == label);
        if prefix == "I" && continues {
            continue;
        }
        let mut end = i + 1;
        while end < tags.len() && tags[end] == format!("I-{label}") {
            end += 1;
        }
        out.push((i, end, label.to_owned(), tokens[i..end].join(" ")));
    }
    out
}

pub fn spans_of(tags: &[Vec<String>], tokens: &[Vec<String>]) -> Vec<Vec<Span>> {
    tags.iter().zip(tokens).map(|(t, w)| chunks(t, w)).collect()
}

fn prf(tp: usize, n_pred: usize, n_gold: usize) -> (f64, f64, f64) {
    if n_pred == 0 && n_gold == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if n_pred == 0 { 0.0 } else { tp as f64 / n_pred as f64 };
    let r = if n_gold == 0 { 0.0 } else { tp as f64 / n_gold as f64 };
    (p, r, f1(p, r))
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn same_pos(a: &Span, b: &Span) -> bool {
    a.0 == b.0 && a.1 == b.1 && a.2 == b.2
}

fn dedup(spans: &[Span]) -> Vec<&Span> {
    let mut out: Vec<&Span> = Vec::new();
    for s in spans {
        if !out.iter().any(|o| same_pos(o, s)) {
            out.push(s);
        }
    }
    out
}

pub fn entity_prf(gold: &[Vec<Span>], pred: &[Vec<Span>]) -> (f64, f64, f64) {
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let g = dedup(g);
        let p = dedup(p);
        ng += g.len();
        np += p.len();
        tp += p.iter().filter(|x| g.iter().any(|y| same_pos(x, y))).count();
    }
    prf(tp, np, ng)
}

/// Unique `(surface, label)` types on `side`, and how many of them have a
/// span matching `other` exactly.
fn surface_types(side: &[Vec<Span>], other: &[Vec<Span>], case_sensitive: bool) -> (usize, usize) {
    let norm = |s: &str| if case_sensitive { s.to_owned() } else { s.to_lowercase() };
    let mut types: Vec<(String, String)> = Vec::new();
    for spans in side {
        for s in spans {
            let t = (norm(&s.3), s.2.clone());
            if !types.contains(&t) {
                types.push(t);
            }
        }
    }
    let hits = types
        .iter()
        .filter(|t| {
            side.iter().zip(other).any(|(mine, theirs)| {
                mine.iter()
                    .any(|s| norm(&s.3) == t.0 && s.2 == t.1 && theirs.iter().any(|o| same_pos(s, o)))
            })
        })
        .count();
    (types.len(), hits)
}

pub fn surface_prf(gold: &[Vec<Span>], pred: &[Vec<Span>], case_sensitive: bool) -> (f64, f64, f64) {
    let (ng, gold_hit) = surface_types(gold, pred, case_sensitive);
    let (np, pred_hit) = surface_types(pred, gold, case_sensitive);
    if ng == 0 && np == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if np == 0 { 0.0 } else { pred_hit as f64 / np as f64 };
    let r = if ng == 0 { 0.0 } else { gold_hit as f64 / ng as f64 };
    (p, r, f1(p, r))
}

/// F1 for spans with length in `lo..=hi`; `None` when the bucket is empty on
/// both sides.
pub fn bucket_f1(gold: &[Vec<Span>], pred: &[Vec<Span>], lo: usize, hi: usize) -> Option<f64> {
    let inside = |s: &Span| (lo..=hi).contains(&(s.1 - s.0));
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let g = dedup(g);
        let p = dedup(p);
        ng += g.iter().filter(|s| inside(s)).count();
        for s in p.iter().filter(|s| inside(s)) {
            np += 1;
            if g.iter().any(|o| same_pos(s, o)) {
                tp += 1;
            }
        }
    }
    (np + ng > 0).then(|| prf(tp, np, ng).2)
}

pub fn weighted_macro_f1(gold: &[String], pred: &[String]) -> f64 {
    let mut labels: Vec<&String> = gold.iter().collect();
    labels.sort();
    labels.dedup();
    let n = gold.len() as f64;
    let mut total = 0.0;
    for l in labels {
        let support = gold.iter().filter(|g| *g == l).count();
        let predicted = pred.iter().filter(|p| *p == l).count();
        let tp = gold.iter().zip(pred).filter(|(g, p)| *g == l && *p == l).count();
        total += support as f64 / n * prf(tp, predicted, support).2;
    }
    total
}

pub fn mrr(rankings: &[Vec<String>], relevant: &[HashSet<String>]) -> f64 {
    let mut total = 0.0;
    for (ranking, gold) in rankings.iter().zip(relevant) {
        for (i, c) in ranking.iter().enumerate() {
            if gold.contains(c) {
                total += 1.0 / (i + 1) as f64;
                break;
            }
        }
    }
    total / rankings.len() as f64
}

/// Random classification labels (up to 3 classes) for `weighted_macro_f1`.
pub fn random_labels(seed: u64) -> (Vec<String>, Vec<String>) {
    let mut r = rng::derive(seed, "oracle-labels", 0);
    let n = r.random_range(1..=20);
    let pick = |r: &mut rng::Rng| LABELS[r.random_range(0..LABELS.len())].to_owned();
    let gold: Vec<String> = (0..n).map(|_| pick(&mut r)).collect();
    let pred = (0..n).map(|_| pick(&mut r)).collect();
    (gold, pred)
}

/// Random rankings over a pool of 8 candidates with random relevant sets.
pub fn random_rankings(seed: u64) -> (Vec<Vec<String>>, Vec<HashSet<String>>) {
    let mut r = rng::derive(seed, "oracle-rank", 0);
    let queries = r.random_range(1..=10);
    let mut rankings = Vec::new();
    let mut relevant = Vec::new();
    for _ in 0..queries {
        let mut pool: Vec<String> = (0..8).map(|i| format!("c{i}")).collect();
        for i in (1..pool.len()).rev() {
            pool.swap(i, r.random_range(0..=i));
        }
        pool.truncate(r.random_range(1..=8));
        rankings.push(pool);
        relevant.push((0..8).filter(|_| r.random::<f64>() < 0.2).map(|i| format!("c{i}")).collect());
    }
    (rankings, relevant)
}
