use serde::{Deserialize, Serialize};

use super::{check_lengths, MetricsError};

/// Token span `[start, end)` with its label and space-joined surface form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub surface: String,
}

impl LabeledSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

pub fn parse_tag(tag: &str) -> Option<Tag<'_>> {
    if tag == "O" {
        return Some(Tag::Outside);
    }
    let (prefix, label) = tag.split_once('-')?;
    if label.is_empty() {
        return None;
    }
    match prefix {
        "B" => Some(Tag::Begin(label)),
        "I" => Some(Tag::Inside(label)),
        _ => None,
    }
}

/// Decodes BIO tags into spans. An `I-X` that does not continue an open `X`
/// span starts a new one, as conlleval does.
pub fn decode_bio<S: AsRef<str>, T: AsRef<str>>(tags: &[S], tokens: &[T]) -> Result<Vec<LabeledSpan>, MetricsError> {
    check_lengths(tags.len(), tokens.len())?;
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    let close = |open: &mut Option<(usize, &str)>, end: usize, spans: &mut Vec<LabeledSpan>| {
        if let Some((start, label)) = open.take() {
            let surface = tokens[start..end].iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ");
            spans.push(LabeledSpan { start, end, label: label.to_owned(), surface });
        }
    };
    for (i, raw) in tags.iter().enumerate() {
        let tag = parse_tag(raw.as_ref()).ok_or_else(|| MetricsError::MalformedTag {
            tag: raw.as_ref().to_owned(),
            position: i,
        })?;
        match tag {
            Tag::Outside => close(&mut open, i, &mut spans),
            Tag::Begin(label) => {
                close(&mut open, i, &mut spans);
                open = Some((i, label));
            }
            Tag::Inside(label) => {
                if !matches!(open, Some((_, l)) if l == label) {
                    close(&mut open, i, &mut spans);
                    open = Some((i, label));
                }
            }
        }
    }
    close(&mut open, tags.len(), &mut spans);
    Ok(spans)
}
