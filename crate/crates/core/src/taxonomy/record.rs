use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::LanguageCode;

/// Per-language text.
pub type LangMap = BTreeMap<LanguageCode, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptKind {
    Occupation,
    Skill,
    Alias,
}

impl fmt::Display for ConceptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConceptKind::Occupation => "occupation",
            ConceptKind::Skill => "skill",
            ConceptKind::Alias => "alias",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MajorGroup {
    pub group_id: String,
    pub title: LangMap,
    #[serde(default)]
    pub description: LangMap,
}

/// One occupation, skill or alias.
///
/// For aliases `description` is always the target occupation's map; the
/// loader overwrites whatever the dump carried.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptRecord {
    pub concept_id: String,
    pub kind: ConceptKind,
    pub esco_code: String,
    #[serde(default)]
    pub alias_of: Option<String>,
    #[serde(default)]
    pub major_group: Option<String>,
    pub preferred_label: LangMap,
    pub description: LangMap,
    #[serde(default)]
    pub essential_skills: Vec<String>,
    #[serde(default)]
    pub optional_skills: Vec<String>,
}

impl ConceptRecord {
    pub fn label(&self, lang: &LanguageCode) -> &str {
        self.preferred_label.get(lang).map_or("", String::as_str)
    }

    pub fn description_in(&self, lang: &LanguageCode) -> &str {
        self.description.get(lang).map_or("", String::as_str)
    }

    pub fn skills(&self) -> impl Iterator<Item = &String> {
        self.essential_skills.iter().chain(&self.optional_skills)
    }
}

pub(super) const CONCEPT_FIELDS: &[&str] = &[
    "concept_id",
    "kind",
    "esco_code",
    "alias_of",
    "major_group",
    "preferred_label",
    "description",
    "essential_skills",
    "optional_skills",
];

pub(super) const GROUP_FIELDS: &[&str] = &["kind", "group_id", "title", "description"];

/// Serialized form of a group line; `kind` is re-added on output.
#[derive(Serialize)]
pub(super) struct GroupLine<'a> {
    pub kind: &'static str,
    pub group_id: &'a str,
    pub title: &'a LangMap,
    pub description: &'a LangMap,
}
