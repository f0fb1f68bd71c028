use std::collections::BTreeMap;

use serde::Serialize;

use super::{EntryId, LanguageCode, TaxonomyStore};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageStats {
    pub instance_count: usize,
    /// `None` when the language has no entries.
    pub mean_token_length: Option<f64>,
    pub max_token_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub languages: BTreeMap<LanguageCode, LanguageStats>,
    pub total: LanguageStats,
}

fn summarize(lengths: &[usize]) -> LanguageStats {
    let n = lengths.len();
    LanguageStats {
        instance_count: n,
        mean_token_length: (n > 0).then(|| lengths.iter().sum::<usize>() as f64 / n as f64),
        max_token_length: lengths.iter().copied().max(),
    }
}

/// Per-language description counts and token lengths (descriptions only,
/// labels excluded). Every declared language appears, possibly with zero
/// instances.
pub fn corpus_stats(store: &TaxonomyStore, tokenizer: &impl Tokenizer) -> CorpusStats {
    let mut per_lang: BTreeMap<LanguageCode, Vec<usize>> =
        store.languages().iter().map(|l| (l.clone(), Vec::new())).collect();
    let mut all = Vec::with_capacity(store.entry_count());
    for i in 0..store.entry_count() {
        let (c, lang) = store.entry(EntryId(i as u32));
        let len = tokenizer.encode(store.record(c).description_in(lang)).len();
        per_lang.get_mut(lang).expect("entry language is declared").push(len);
        all.push(len);
    }
    CorpusStats {
        languages: per_lang.iter().map(|(l, v)| (l.clone(), summarize(v))).collect(),
        total: summarize(&all),
    }
}
