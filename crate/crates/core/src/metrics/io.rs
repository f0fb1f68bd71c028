//! Readers for evaluation inputs.
//!
//! Sequence labeling: one `token tag` line per token (tab or any whitespace
//! run; the first column is the token and the last the tag), blank lines
//! between sentences, `-DOCSTART-` lines ignored. Classification and ranking:
//! JSON Lines with a `label`, `labels` or `ranking` field.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde_json::Value;

use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

fn open(path: &Path) -> Result<BufReader<File>, MetricsError> {
    File::open(path).map(BufReader::new).map_err(|source| MetricsError::Io {
        context: format!("opening {}", path.display()),
        source,
    })
}

fn read_lines(r: impl BufRead) -> impl Iterator<Item = (usize, Result<String, MetricsError>)> {
    r.lines().enumerate().map(|(i, l)| {
        (
            i + 1,
            l.map_err(|source| MetricsError::Io {
                context: format!("reading line {}", i + 1),
                source,
            }),
        )
    })
}

pub fn read_tagged(r: impl BufRead) -> Result<Vec<TaggedSentence>, MetricsError> {
    let mut out = Vec::new();
    let mut cur = TaggedSentence::default();
    for (line_no, line) in read_lines(r) {
        let line = line?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            if !cur.tokens.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if cols[0] == "-DOCSTART-" {
            continue;
        }
        if cols.len() < 2 {
            return Err(MetricsError::Format {
                line: line_no,
                message: "expected a token and a tag".into(),
            });
        }
        cur.tokens.push(cols[0].to_owned());
        cur.tags.push(cols[cols.len() - 1].to_owned());
    }
    if !cur.tokens.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

pub fn read_tagged_file(path: &Path) -> Result<Vec<TaggedSentence>, MetricsError> {
    read_tagged(open(path)?)
}

/// Field `key` of every non-blank JSON line.
pub fn read_jsonl_field(r: impl BufRead, key: &str) -> Result<Vec<Value>, MetricsError> {
    let mut out = Vec::new();
    for (line_no, line) in read_lines(r) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fmt = |message: String| MetricsError::Format { line: line_no, message };
        let v: Value = serde_json::from_str(&line).map_err(|e| fmt(e.to_string()))?;
        let field = v.get(key).ok_or_else(|| fmt(format!("missing field `{key}`")))?;
        out.push(field.clone());
    }
    Ok(out)
}

fn as_string(v: &Value, what: &str) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(format!("{what} must be a string")),
    }
}

/// One label per line from `{"label": ...}`.
pub fn read_labels(r: impl BufRead) -> Result<Vec<String>, MetricsError> {
    read_jsonl_field(r, "label")?
        .iter()
        .enumerate()
        .map(|(i, v)| as_string(v, "label").map_err(|message| MetricsError::Format { line: i + 1, message }))
        .collect()
}

/// A list of strings per line from `{key: [...]}`.
pub fn read_lists(r: impl BufRead, key: &str) -> Result<Vec<Vec<String>>, MetricsError> {
    read_jsonl_field(r, key)?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let bad = |message: String| MetricsError::Format { line: i + 1, message };
            v.as_array()
                .ok_or_else(|| bad(format!("`{key}` must be an array")))?
                .iter()
                .map(|x| as_string(x, key).map_err(bad))
                .collect()
        })
        .collect()
}

pub fn read_labels_file(path: &Path) -> Result<Vec<String>, MetricsError> {
    read_labels(open(path)?)
}

pub fn read_lists_file(path: &Path, key: &str) -> Result<Vec<Vec<String>>, MetricsError> {
    read_lists(open(path)?, key)
}
