//! Multilingual occupation/skill taxonomy: schema, loading, indexes.
//!
//! A dump is a JSONL file holding one record per concept (occupation, skill
//! or alias) plus one record per major group. Loading validates the schema,
//! checks that every reference resolves, and builds the lookup structures the
//! sampler needs: occupation pages, group membership and the flat list of
//! `(concept, language)` pairs that carry a non-empty description.

mod record;
mod stats;
mod store;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use record::{ConceptKind, ConceptRecord, LangMap, MajorGroup};
pub use stats::{corpus_stats, CorpusStats, LanguageStats};
pub use store::{load_taxonomy, ConceptIdx, EntryId, GroupIdx, LoadOptions, Loaded, TaxonomyStore};

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: {field} references unknown id `{target}`")]
    DanglingReference {
        line: usize,
        field: &'static str,
        target: String,
    },
    #[error("line {line}: duplicate id `{id}` (first defined on line {first_line})")]
    DuplicateId {
        line: usize,
        id: String,
        first_line: usize,
    },
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("`{id}` is a {actual}, expected {expected}")]
    Kind {
        id: String,
        expected: ConceptKind,
        actual: ConceptKind,
    },
}

impl TaxonomyError {
    /// Line number in the source dump, for load-time errors.
    pub fn line(&self) -> Option<usize> {
        match self {
            TaxonomyError::Schema { line, .. }
            | TaxonomyError::DanglingReference { line, .. }
            | TaxonomyError::DuplicateId { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Lowercase language tag such as `en` or `da`.
///
/// Accepts a two-letter primary tag optionally followed by `-` and a
/// lowercase region/variant (`pt-br`), which some taxonomy releases use.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageCode(String);

impl LanguageCode {
    pub fn new(code: impl Into<String>) -> Result<Self, String> {
        let code = code.into();
        let mut parts = code.splitn(2, '-');
        let primary = parts.next().unwrap_or_default();
        let primary_ok = primary.len() == 2 && primary.bytes().all(|b| b.is_ascii_lowercase());
        let rest_ok = parts
            .next()
            .is_none_or(|r| !r.is_empty() && r.bytes().all(|b| b.is_ascii_lowercase()));
        if primary_ok && rest_ok {
            Ok(Self(code))
        } else {
            Err(format!("invalid language code `{code}`"))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LanguageCode {
    type Error = String;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<LanguageCode> for String {
    fn from(value: LanguageCode) -> Self {
        value.0
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for LanguageCode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// Descriptions that are empty or whitespace-only do not count as text.
pub fn is_blank(text: &str) -> bool {
    text.trim().is_empty()
}
