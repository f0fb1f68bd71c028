use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{check_lengths, LabeledSpan, MetricsError, Prf};

type Key<'a> = (usize, usize, usize, &'a str);

fn keys(spans: &[Vec<LabeledSpan>]) -> HashSet<Key<'_>> {
    spans
        .iter()
        .enumerate()
        .flat_map(|(s, v)| v.iter().map(move |x| (s, x.start, x.end, x.label.as_str())))
        .collect()
}

/// Exact `(start, end, label)` matching within each sentence.
pub fn entity_span_f1(gold: &[Vec<LabeledSpan>], pred: &[Vec<LabeledSpan>]) -> Result<Prf, MetricsError> {
    check_lengths(gold.len(), pred.len())?;
    let gold_keys = keys(gold);
    let pred_keys = keys(pred);
    let tp = pred_keys.intersection(&gold_keys).count();
    Ok(Prf::from_counts(tp, pred_keys.len(), gold_keys.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceOptions {
    pub case_sensitive: bool,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        Self { case_sensitive: true }
    }
}

fn surface_type(span: &LabeledSpan, opts: SurfaceOptions) -> (String, &str) {
    let surface = if opts.case_sensitive {
        span.surface.clone()
    } else {
        span.surface.to_lowercase()
    };
    (surface, span.label.as_str())
}

pub fn surface_span_f1(gold: &[Vec<LabeledSpan>], pred: &[Vec<LabeledSpan>]) -> Result<Prf, MetricsError> {
    surface_span_f1_with(gold, pred, SurfaceOptions::default())
}

/// Span F1 over unique `(surface, label)` types. A type counts as found when
/// at least one span of that type is an exact match.
pub fn surface_span_f1_with(
    gold: &[Vec<LabeledSpan>],
    pred: &[Vec<LabeledSpan>],
    opts: SurfaceOptions,
) -> Result<Prf, MetricsError> {
    check_lengths(gold.len(), pred.len())?;
    let gold_keys = keys(gold);
    let pred_keys = keys(pred);
    let collect = |side: &[Vec<LabeledSpan>], other: &HashSet<Key<'_>>| {
        let mut all = HashSet::new();
        let mut hit = HashSet::new();
        for (s, spans) in side.iter().enumerate() {
            for x in spans {
                let t = surface_type(x, opts);
                if other.contains(&(s, x.start, x.end, x.label.as_str())) {
                    hit.insert(t.clone());
                }
                all.insert(t);
            }
        }
        (all.len(), hit.len())
    };
    let (n_gold, gold_hit) = collect(gold, &pred_keys);
    let (n_pred, pred_hit) = collect(pred, &gold_keys);
    if n_pred == 0 && n_gold == 0 {
        return Ok(Prf::from_counts(0, 0, 0));
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(Prf::from_pr(ratio(pred_hit, n_pred), ratio(gold_hit, n_gold)))
}

/// Span-length bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bucket {
    L1to2,
    L3to4,
    L5to6,
    L7to8,
    L9to10,
    Over10,
}

impl Bucket {
    /// The five reported buckets, excluding the overflow.
    pub const REPORTED: [Bucket; 5] = [Bucket::L1to2, Bucket::L3to4, Bucket::L5to6, Bucket::L7to8, Bucket::L9to10];

    pub fn of_len(len: usize) -> Bucket {
        match len {
            0..=2 => Bucket::L1to2,
            3..=4 => Bucket::L3to4,
            5..=6 => Bucket::L5to6,
            7..=8 => Bucket::L7to8,
            9..=10 => Bucket::L9to10,
            _ => Bucket::Over10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Bucket::L1to2 => "1-2",
            Bucket::L3to4 => "3-4",
            Bucket::L5to6 => "5-6",
            Bucket::L7to8 => "7-8",
            Bucket::L9to10 => "9-10",
            Bucket::Over10 => "11+",
        }
    }
}

/// Per-bucket scores; `None` where a bucket has neither gold nor predicted
/// spans.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketScores {
    pub scores: BTreeMap<Bucket, Option<Prf>>,
}

impl BucketScores {
    pub fn get(&self, b: Bucket) -> Option<Prf> {
        self.scores.get(&b).copied().flatten()
    }

    /// F1 per reported bucket, keyed by bucket name.
    pub fn reported_f1(&self) -> BTreeMap<String, Option<f64>> {
        Bucket::REPORTED
            .iter()
            .map(|b| (b.name().to_owned(), self.get(*b).map(|p| p.f1)))
            .collect()
    }

    pub fn overflow_f1(&self) -> Option<f64> {
        self.get(Bucket::Over10).map(|p| p.f1)
    }
}

/// Gold spans are bucketed by length; a matched prediction is credited to its
/// gold span's bucket and an unmatched one to the bucket of its own length.
pub fn bucket_f1(gold: &[Vec<LabeledSpan>], pred: &[Vec<LabeledSpan>]) -> Result<BucketScores, MetricsError> {
    check_lengths(gold.len(), pred.len())?;
    let gold_keys = keys(gold);
    let pred_keys = keys(pred);
    // (tp, pred, gold) per bucket
    let mut counts: BTreeMap<Bucket, (usize, usize, usize)> = BTreeMap::new();
    for &(_, start, end, _) in &gold_keys {
        counts.entry(Bucket::of_len(end - start)).or_default().2 += 1;
    }
    for k in &pred_keys {
        let c = counts.entry(Bucket::of_len(k.2 - k.1)).or_default();
        c.1 += 1;
        if gold_keys.contains(k) {
            c.0 += 1;
        }
    }
    let scores = Bucket::REPORTED
        .iter()
        .chain([Bucket::Over10].iter())
        .map(|&b| {
            let s = counts.get(&b).map(|&(tp, p, g)| Prf::from_counts(tp, p, g));
            (b, s)
        })
        .collect();
    Ok(BucketScores { scores })
}

/// Unique `(surface, label)` pairs over the number of spans.
pub fn unique_entity_ratio(spans: &[LabeledSpan]) -> Result<f64, MetricsError> {
    if spans.is_empty() {
        return Err(MetricsError::EmptyInput("no spans".into()));
    }
    let unique: HashSet<(&str, &str)> = spans.iter().map(|s| (s.surface.as_str(), s.label.as_str())).collect();
    Ok(unique.len() as f64 / spans.len() as f64)
}
