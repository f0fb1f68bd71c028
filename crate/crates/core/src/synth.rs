//! Synthetic taxonomies with learnable structure.
//!
//! Every occupation, skill and group gets a made-up base word. Descriptions
//! are short templates that mention the concept's own word together with its
//! occupation and group words, so a pair's relation is recoverable from the
//! text. Each pseudo-language rewrites every word (template words included)
//! with a fixed letter rotation, so the same concept has disjoint tokens in
//! different languages.

use std::collections::HashSet;

use rand::Rng as _;

use crate::rng;
use crate::taxonomy::{ConceptKind, ConceptRecord, LangMap, LanguageCode, MajorGroup, TaxonomyStore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub occupations: usize,
    pub skills: usize,
    pub groups: usize,
    pub languages: usize,
    pub aliases_per_occupation: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            occupations: 20,
            skills: 100,
            groups: 5,
            languages: 3,
            aliases_per_occupation: 1,
            seed: 17,
        }
    }
}

const TEMPLATE_WORDS: [&str; 8] = ["the", "works", "in", "and", "uses", "is", "needed", "by"];

/// Rotates each ASCII lowercase letter by `shift` positions.
pub fn rotate_word(word: &str, shift: usize) -> String {
    word.bytes()
        .map(|b| {
            if b.is_ascii_lowercase() {
                (b'a' + (b - b'a' + (shift % 26) as u8) % 26) as char
            } else {
                b as char
            }
        })
        .collect()
}

/// Pseudo-language codes `xa`, `xb`, ...
pub fn language_codes(n: usize) -> Vec<LanguageCode> {
    assert!(n <= 26, "at most 26 pseudo-languages");
    (0..n)
        .map(|i| LanguageCode::new(format!("x{}", (b'a' + i as u8) as char)).expect("valid code"))
        .collect()
}

struct Lexicon {
    taken: HashSet<String>,
    languages: usize,
    rng: rng::Rng,
}

impl Lexicon {
    fn reserve(&mut self, word: &str) -> bool {
        let variants: Vec<String> = (0..self.languages).map(|k| rotate_word(word, k)).collect();
        if variants.iter().any(|v| self.taken.contains(v)) {
            return false;
        }
        self.taken.extend(variants);
        true
    }

    fn fresh(&mut self) -> String {
        const CONS: &[u8] = b"bdfgklmnprstvz";
        const VOW: &[u8] = b"aeiou";
        loop {
            let syllables = self.rng.random_range(2..=3);
            let word: String = (0..syllables)
                .flat_map(|_| {
                    [
                        CONS[self.rng.random_range(0..CONS.len())] as char,
                        VOW[self.rng.random_range(0..VOW.len())] as char,
                    ]
                })
                .collect();
            if self.reserve(&word) {
                return word;
            }
        }
    }
}

fn localized(langs: &[LanguageCode], text: &str) -> LangMap {
    langs
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let words: Vec<String> = text.split(' ').map(|w| rotate_word(w, k)).collect();
            (l.clone(), words.join(" "))
        })
        .collect()
}

/// Groups and concept records of a synthetic taxonomy.
///
/// Occupation `i` belongs to group `i % groups`; skill `j` is listed by
/// occupation `j % occupations` (essential for the first two skills of an
/// occupation, optional after that).
pub fn synthetic_records(cfg: &SynthConfig) -> (Vec<MajorGroup>, Vec<ConceptRecord>) {
    assert!(cfg.groups > 0 && cfg.occupations > 0 && cfg.languages > 0);
    let langs = language_codes(cfg.languages);
    let mut lex = Lexicon {
        taken: HashSet::new(),
        languages: cfg.languages,
        rng: rng::derive(cfg.seed, "synth", 0),
    };
    for w in TEMPLATE_WORDS {
        assert!(lex.reserve(w));
    }
    let group_words: Vec<String> = (0..cfg.groups).map(|_| lex.fresh()).collect();
    let occ_words: Vec<String> = (0..cfg.occupations).map(|_| lex.fresh()).collect();
    let skill_words: Vec<String> = (0..cfg.skills).map(|_| lex.fresh()).collect();

    let groups = group_words
        .iter()
        .enumerate()
        .map(|(g, w)| MajorGroup {
            group_id: format!("grp{g:02}"),
            title: localized(&langs, w),
            description: localized(&langs, &format!("the {w} works")),
        })
        .collect();

    let mut skills_of: Vec<Vec<usize>> = vec![Vec::new(); cfg.occupations];
    for j in 0..cfg.skills {
        skills_of[j % cfg.occupations].push(j);
    }
    let mut concepts = Vec::new();
    for (i, occ) in occ_words.iter().enumerate() {
        let g = i % cfg.groups;
        let grp = &group_words[g];
        let skills = &skills_of[i];
        let mentioned: Vec<&str> = skills.iter().take(2).map(|&j| skill_words[j].as_str()).collect();
        let desc = if mentioned.is_empty() {
            format!("the {occ} works in {grp}")
        } else {
            format!("the {occ} works in {grp} and uses {}", mentioned.join(" and "))
        };
        let skill_id = |j: &usize| format!("skl{j:03}");
        concepts.push(ConceptRecord {
            concept_id: format!("occ{i:02}"),
            kind: ConceptKind::Occupation,
            esco_code: format!("{}.{}", g + 1, i + 1),
            alias_of: None,
            major_group: Some(format!("grp{g:02}")),
            preferred_label: localized(&langs, occ),
            description: localized(&langs, &desc),
            essential_skills: skills.iter().take(2).map(skill_id).collect(),
            optional_skills: skills.iter().skip(2).map(skill_id).collect(),
        });
        for a in 0..cfg.aliases_per_occupation {
            let alias_word = lex.fresh();
            concepts.push(ConceptRecord {
                concept_id: format!("als{i:02}{a}"),
                kind: ConceptKind::Alias,
                esco_code: format!("{}.{}", g + 1, i + 1),
                alias_of: Some(format!("occ{i:02}")),
                major_group: None,
                preferred_label: localized(&langs, &alias_word),
                description: localized(&langs, &desc),
                essential_skills: Vec::new(),
                optional_skills: Vec::new(),
            });
        }
    }
    for (j, sk) in skill_words.iter().enumerate() {
        let i = j % cfg.occupations;
        let occ = &occ_words[i];
        let grp = &group_words[i % cfg.groups];
        concepts.push(ConceptRecord {
            concept_id: format!("skl{j:03}"),
            kind: ConceptKind::Skill,
            esco_code: String::new(),
            alias_of: None,
            major_group: None,
            preferred_label: localized(&langs, sk),
            description: localized(&langs, &format!("{sk} is needed by the {occ} in {grp}")),
            essential_skills: Vec::new(),
            optional_skills: Vec::new(),
        });
    }
    (groups, concepts)
}

pub fn synthetic_taxonomy(cfg: &SynthConfig) -> TaxonomyStore {
    let (groups, concepts) = synthetic_records(cfg);
    TaxonomyStore::from_records(groups, concepts).expect("synthetic taxonomy is well-formed")
}
