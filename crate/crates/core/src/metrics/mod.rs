//! Evaluation metrics: BIO span decoding, entity- and surface-level span F1,
//! span-length buckets, unique-entity ratio, MRR and weighted macro-F1.

mod bio;
mod classify;
pub mod io;
mod ranking;
mod report;
mod span;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bio::{decode_bio, parse_tag, LabeledSpan, Tag};
pub use classify::weighted_macro_f1;
pub use ranking::mrr;
pub use report::{evaluate_classification, evaluate_ranking, evaluate_spans, EvalReport, SpanReport};
pub use span::{
    bucket_f1, entity_span_f1, surface_span_f1, surface_span_f1_with, unique_entity_ratio, Bucket, BucketScores,
    SurfaceOptions,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("malformed tag `{tag}` at position {position}")]
    MalformedTag { tag: String, position: usize },
    #[error("length mismatch: {gold} gold vs {pred} predicted")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

/// Precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Scores from counts. Empty gold and empty prediction count as perfect;
    /// otherwise an empty side scores 0.
    pub fn from_counts(tp: usize, n_pred: usize, n_gold: usize) -> Self {
        if n_pred == 0 && n_gold == 0 {
            return Self { precision: 1.0, recall: 1.0, f1: 1.0 };
        }
        let precision = if n_pred == 0 { 0.0 } else { tp as f64 / n_pred as f64 };
        let recall = if n_gold == 0 { 0.0 } else { tp as f64 / n_gold as f64 };
        Self::from_pr(precision, recall)
    }

    /// Harmonic mean, 0 when both rates are 0.
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

pub(crate) fn check_lengths(gold: usize, pred: usize) -> Result<(), MetricsError> {
    if gold == pred {
        Ok(())
    } else {
        Err(MetricsError::LengthMismatch { gold, pred })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prf_conventions() {
        assert_eq!(Prf::from_counts(0, 0, 0).f1, 1.0);
        let p = Prf::from_counts(0, 2, 0);
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        let p = Prf::from_counts(1, 1, 2);
        assert_eq!(p.precision, 1.0);
        assert_eq!(p.recall, 0.5);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
    }
}
