//! Word-level tokenizer and paired-segment input assembly.
//!
//! Text is lowercased and split on whitespace; each punctuation character is
//! its own token. Ids 0..=4 are reserved for the special tokens and the
//! vocabulary proper starts at [`FIRST_TOKEN`].
//!
//! The text vocabulary format is one token per line with no specials: the
//! token on line `n` (0-based) has id `n + FIRST_TOKEN`.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::taxonomy::{EntryId, TaxonomyStore};

pub type TokenId = u32;

pub const CLS: TokenId = 0;
pub const SEP: TokenId = 1;
pub const PAD: TokenId = 2;
pub const MASK: TokenId = 3;
pub const UNK: TokenId = 4;
pub const FIRST_TOKEN: TokenId = 5;

const SPECIAL_NAMES: [&str; 5] = ["[CLS]", "[SEP]", "[PAD]", "[MASK]", "[UNK]"];

pub fn is_special(id: TokenId) -> bool {
    id < FIRST_TOKEN
}

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("corpus has no description entries")]
    EmptyCorpus,
    #[error("no token reaches min_freq = {0}")]
    EmptyVocab(usize),
    #[error("min_freq must be positive")]
    ZeroMinFreq,
    #[error("segment {0} is empty after encoding")]
    DegenerateInput(char),
    #[error("max_len {0} is below the minimum of 8")]
    MaxLenTooSmall(usize),
    #[error("invalid token sequence: {0}")]
    InvalidSequence(String),
    #[error("vocabulary line {line}: {message}")]
    VocabFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Anything that maps text to token ids.
pub trait Tokenizer {
    fn encode(&self, text: &str) -> Vec<TokenId>;
    fn vocab_size(&self) -> usize;
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || ('\u{2000}'..='\u{206f}').contains(&c)
        || matches!(c, '«' | '»' | '¿' | '¡' | '·' | '§')
}

/// Lowercases and splits `text` into word and punctuation tokens.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() || is_punctuation(c) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        } else {
            word.push(c);
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Vocabulary over the label + description text of every description entry.
    pub fn build(store: &TaxonomyStore, min_freq: usize) -> Result<Self, TokenizerError> {
        if store.entry_count() == 0 {
            return Err(TokenizerError::EmptyCorpus);
        }
        let texts = (0..store.entry_count()).map(|i| entry_text(store, EntryId(i as u32)));
        Self::from_texts(texts, min_freq)
    }

    pub fn from_texts<S: AsRef<str>>(
        texts: impl IntoIterator<Item = S>,
        min_freq: usize,
    ) -> Result<Self, TokenizerError> {
        Self::from_counts(token_counts(texts), min_freq)
    }

    /// Keeps tokens with count ≥ `min_freq`, ordered by count descending then
    /// lexicographically.
    pub fn from_counts(counts: HashMap<String, usize>, min_freq: usize) -> Result<Self, TokenizerError> {
        if min_freq == 0 {
            return Err(TokenizerError::ZeroMinFreq);
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_freq).collect();
        if kept.is_empty() {
            return Err(TokenizerError::EmptyVocab(min_freq));
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_tokens(kept.into_iter().map(|(t, _)| t).collect()))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId + FIRST_TOKEN))
            .collect();
        Self { tokens, index }
    }

    pub fn size(&self) -> usize {
        self.tokens.len() + FIRST_TOKEN as usize
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        if is_special(id) {
            Some(SPECIAL_NAMES[id as usize])
        } else {
            self.tokens.get((id - FIRST_TOKEN) as usize).map(String::as_str)
        }
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter().map(|&id| self.token(id).unwrap_or("[UNK]")).collect()
    }

    pub fn write_text(&self, mut w: impl Write) -> io::Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_text(r: impl BufRead) -> Result<Self, TokenizerError> {
        let mut tokens = Vec::new();
        let mut seen = HashMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let bad = |message: String| TokenizerError::VocabFormat { line: i + 1, message };
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(bad("token must be non-empty and contain no whitespace".into()));
            }
            if let Some(first) = seen.insert(line.clone(), i + 1) {
                return Err(bad(format!("duplicate token (first on line {first})")));
            }
            tokens.push(line);
        }
        if tokens.is_empty() {
            return Err(TokenizerError::EmptyVocab(1));
        }
        Ok(Self::from_tokens(tokens))
    }
}

impl Tokenizer for Vocab {
    fn encode(&self, text: &str) -> Vec<TokenId> {
        pre_tokenize(text)
            .iter()
            .map(|t| self.id(t).unwrap_or(UNK))
            .collect()
    }

    fn vocab_size(&self) -> usize {
        self.size()
    }
}

pub fn token_counts<S: AsRef<str>>(texts: impl IntoIterator<Item = S>) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for text in texts {
        for t in pre_tokenize(text.as_ref()) {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    counts
}

/// Label and description of an entry joined by a single space.
pub fn entry_text(store: &TaxonomyStore, e: EntryId) -> String {
    let (c, lang) = store.entry(e);
    let rec = store.record(c);
    join_label(rec.label(lang), rec.description_in(lang))
}

fn join_label(label: &str, desc: &str) -> String {
    match (label.is_empty(), desc.is_empty()) {
        (true, _) => desc.to_owned(),
        (_, true) => label.to_owned(),
        _ => format!("{label} {desc}"),
    }
}

/// `[CLS] A [SEP] B [SEP]` with `boundary` at the first token of B.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<TokenId>,
    boundary: usize,
}

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>, boundary: usize) -> Result<Self, TokenizerError> {
        let bad = |m: &str| Err(TokenizerError::InvalidSequence(m.to_owned()));
        if ids.first() != Some(&CLS) {
            return bad("first token must be CLS");
        }
        if ids.last() != Some(&SEP) {
            return bad("last token must be SEP");
        }
        if ids.iter().filter(|&&t| t == SEP).count() != 2 {
            return bad("exactly two SEP tokens required");
        }
        if boundary == 0 || boundary >= ids.len() || ids[boundary - 1] != SEP {
            return bad("boundary must follow the first SEP");
        }
        Ok(Self { ids, boundary })
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn boundary(&self) -> usize {
        self.boundary
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Splits `budget` tokens between segments of length `len_a` and `len_b`.
///
/// Each side gets half (A takes the odd token); a side that needs less than
/// its half passes the surplus to the other.
pub fn segment_budgets(len_a: usize, len_b: usize, budget: usize) -> (usize, usize) {
    let half_b = budget / 2;
    let half_a = budget - half_b;
    if len_a <= half_a {
        (len_a, len_b.min(budget - len_a))
    } else if len_b <= half_b {
        (len_a.min(budget - len_b), len_b)
    } else {
        (half_a, half_b)
    }
}

pub fn build_pair_input(
    tok: &impl Tokenizer,
    label_a: &str,
    desc_a: &str,
    label_b: &str,
    desc_b: &str,
    max_len: usize,
) -> Result<TokenSequence, TokenizerError> {
    if max_len < 8 {
        return Err(TokenizerError::MaxLenTooSmall(max_len));
    }
    let mut a = tok.encode(&join_label(label_a, desc_a));
    let mut b = tok.encode(&join_label(label_b, desc_b));
    if a.is_empty() {
        return Err(TokenizerError::DegenerateInput('A'));
    }
    if b.is_empty() {
        return Err(TokenizerError::DegenerateInput('B'));
    }
    let (keep_a, keep_b) = segment_budgets(a.len(), b.len(), max_len - 3);
    a.truncate(keep_a);
    b.truncate(keep_b);
    let mut ids = Vec::with_capacity(keep_a + keep_b + 3);
    ids.push(CLS);
    ids.extend(a);
    ids.push(SEP);
    let boundary = ids.len();
    ids.extend(b);
    ids.push(SEP);
    TokenSequence::new(ids, boundary)
}
