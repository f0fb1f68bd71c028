use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::io::TaggedSentence;
use super::{
    bucket_f1, check_lengths, decode_bio, entity_span_f1, mrr, surface_span_f1_with, unique_entity_ratio,
    weighted_macro_f1, LabeledSpan, MetricsError, Prf, SurfaceOptions,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    pub entity_f1: Prf,
    pub surface_f1: Prf,
    /// F1 for buckets 1-2, 3-4, 5-6, 7-8 and 9-10; `null` when a bucket is
    /// empty on both sides.
    pub bucket_f1: BTreeMap<String, Option<f64>>,
    /// Spans longer than 10 tokens.
    pub overflow_f1: Option<f64>,
    /// Over gold spans; `null` when there are none.
    pub unique_entity_ratio: Option<f64>,
    pub sentences: usize,
    pub gold_spans: usize,
    pub pred_spans: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<SpanReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mrr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_macro_f1: Option<f64>,
}

fn decode_all(sents: &[TaggedSentence]) -> Result<Vec<Vec<LabeledSpan>>, MetricsError> {
    sents.iter().map(|s| decode_bio(&s.tags, &s.tokens)).collect()
}

pub fn evaluate_spans(
    gold: &[TaggedSentence],
    pred: &[TaggedSentence],
    opts: SurfaceOptions,
) -> Result<EvalReport, MetricsError> {
    check_lengths(gold.len(), pred.len())?;
    for (g, p) in gold.iter().zip(pred) {
        check_lengths(g.tokens.len(), p.tokens.len())?;
    }
    let g = decode_all(gold)?;
    let p = decode_all(pred)?;
    let buckets = bucket_f1(&g, &p)?;
    let flat: Vec<LabeledSpan> = g.iter().flatten().cloned().collect();
    let span = SpanReport {
        entity_f1: entity_span_f1(&g, &p)?,
        surface_f1: surface_span_f1_with(&g, &p, opts)?,
        bucket_f1: buckets.reported_f1(),
        overflow_f1: buckets.overflow_f1(),
        unique_entity_ratio: unique_entity_ratio(&flat).ok(),
        sentences: g.len(),
        gold_spans: flat.len(),
        pred_spans: p.iter().map(Vec::len).sum(),
    };
    Ok(EvalReport {
        span: Some(span),
        ..Default::default()
    })
}

pub fn evaluate_classification<S: AsRef<str>, T: AsRef<str>>(gold: &[S], pred: &[T]) -> Result<EvalReport, MetricsError> {
    Ok(EvalReport {
        weighted_macro_f1: Some(weighted_macro_f1(gold, pred)?),
        ..Default::default()
    })
}

pub fn evaluate_ranking(relevant: &[Vec<String>], rankings: &[Vec<String>]) -> Result<EvalReport, MetricsError> {
    let sets: Vec<HashSet<String>> = relevant.iter().map(|r| r.iter().cloned().collect()).collect();
    Ok(EvalReport {
        mrr: Some(mrr(rankings, &sets)?),
        ..Default::default()
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
}

impl EvalReport {
    /// Aligned two-column text table.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = Vec::new();
        if let Some(s) = &self.span {
            for (name, p) in [("entity", s.entity_f1), ("surface", s.surface_f1)] {
                rows.push((format!("{name} precision"), format!("{:.4}", p.precision)));
                rows.push((format!("{name} recall"), format!("{:.4}", p.recall)));
                rows.push((format!("{name} f1"), format!("{:.4}", p.f1)));
            }
            for (b, f) in &s.bucket_f1 {
                rows.push((format!("bucket {b} f1"), opt(*f)));
            }
            rows.push(("bucket 11+ f1".into(), opt(s.overflow_f1)));
            rows.push(("unique entity ratio".into(), opt(s.unique_entity_ratio)));
            rows.push(("sentences".into(), s.sentences.to_string()));
            rows.push(("gold spans".into(), s.gold_spans.to_string()));
            rows.push(("predicted spans".into(), s.pred_spans.to_string()));
        }
        if let Some(m) = self.mrr {
            rows.push(("mrr".into(), format!("{m:.4}")));
        }
        if let Some(f) = self.weighted_macro_f1 {
            rows.push(("weighted macro-f1".into(), format!("{f:.4}")));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>8}");
        }
        out
    }
}
