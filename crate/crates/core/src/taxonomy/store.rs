use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde_json::{Map, Value};

use super::record::{GroupLine, CONCEPT_FIELDS, GROUP_FIELDS};
use super::{is_blank, ConceptKind, ConceptRecord, LanguageCode, MajorGroup, TaxonomyError};

type Result<T> = std::result::Result<T, TaxonomyError>;

/// Position of a concept in the store's id-sorted concept table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptIdx(pub(crate) u32);

impl ConceptIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupIdx(pub(crate) u32);

impl GroupIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Position in the description-entry index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryId(pub(crate) u32);

impl EntryId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    concept: ConceptIdx,
    lang: u16,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject unknown fields instead of dropping them with a warning.
    pub strict: bool,
}

#[derive(Debug)]
pub struct Loaded {
    pub store: TaxonomyStore,
    pub warnings: Vec<String>,
}

/// Loads a taxonomy dump in lenient mode, discarding warnings.
pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<TaxonomyStore> {
    TaxonomyStore::load(path, LoadOptions::default()).map(|l| l.store)
}

/// Validated, fully indexed taxonomy. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxonomyStore {
    concepts: Vec<ConceptRecord>,
    concept_index: HashMap<String, ConceptIdx>,
    groups: Vec<MajorGroup>,
    group_index: HashMap<String, GroupIdx>,
    languages: Vec<LanguageCode>,
    entries: Vec<Entry>,
    // entries of concept c live at entries[entry_start[c]..entry_start[c + 1]]
    entry_start: Vec<u32>,
    pages: Vec<Vec<ConceptIdx>>,
    owners: Vec<Vec<ConceptIdx>>,
    concept_groups: Vec<Vec<GroupIdx>>,
    group_occupations: Vec<Vec<ConceptIdx>>,
    group_members: Vec<Vec<ConceptIdx>>,
}

enum Line {
    Group(MajorGroup),
    Concept(ConceptRecord),
}

fn parse_line(text: &str, line: usize, opts: LoadOptions, warnings: &mut Vec<String>) -> Result<Line> {
    let schema = |message: String| TaxonomyError::Schema { line, message };
    let value: Value = serde_json::from_str(text).map_err(|e| schema(format!("invalid JSON: {e}")))?;
    let Value::Object(mut obj) = value else {
        return Err(schema("expected a JSON object".into()));
    };
    let kind = match obj.get("kind") {
        Some(Value::String(k)) => k.clone(),
        Some(_) => return Err(schema("field `kind` must be a string".into())),
        None => return Err(schema("missing field `kind`".into())),
    };
    let is_group = kind == "group";
    strip_unknown(&mut obj, if is_group { GROUP_FIELDS } else { CONCEPT_FIELDS }, line, opts, warnings)?;
    if is_group {
        obj.remove("kind");
        let group: MajorGroup = serde_json::from_value(Value::Object(obj)).map_err(|e| schema(e.to_string()))?;
        Ok(Line::Group(group))
    } else {
        let concept: ConceptRecord =
            serde_json::from_value(Value::Object(obj)).map_err(|e| schema(e.to_string()))?;
        Ok(Line::Concept(concept))
    }
}

fn strip_unknown(
    obj: &mut Map<String, Value>,
    known: &[&str],
    line: usize,
    opts: LoadOptions,
    warnings: &mut Vec<String>,
) -> Result<()> {
    let unknown: Vec<String> = obj.keys().filter(|k| !known.contains(&k.as_str())).cloned().collect();
    for key in unknown {
        if opts.strict {
            return Err(TaxonomyError::Schema {
                line,
                message: format!("unknown field `{key}`"),
            });
        }
        let msg = format!("line {line}: ignoring unknown field `{key}`");
        log::warn!("{msg}");
        warnings.push(msg);
        obj.remove(&key);
    }
    Ok(())
}

impl TaxonomyStore {
    pub fn load(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Loaded> {
        let path = path.as_ref();
        let io_err = |source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::open(path).map_err(io_err)?;
        Self::from_reader(BufReader::new(file), opts).map_err(|e| match e {
            TaxonomyError::Io { source, .. } => io_err(source),
            other => other,
        })
    }

    pub fn from_jsonl_str(text: &str, opts: LoadOptions) -> Result<Loaded> {
        Self::from_reader(text.as_bytes(), opts)
    }

    pub fn from_reader(reader: impl BufRead, opts: LoadOptions) -> Result<Loaded> {
        let mut warnings = Vec::new();
        let mut groups = Vec::new();
        let mut concepts = Vec::new();
        for (i, text) in reader.lines().enumerate() {
            let line = i + 1;
            let text = text.map_err(|source| TaxonomyError::Io {
                path: "<reader>".into(),
                source,
            })?;
            if text.trim().is_empty() {
                continue;
            }
            match parse_line(&text, line, opts, &mut warnings)? {
                Line::Group(g) => groups.push((line, g)),
                Line::Concept(c) => concepts.push((line, c)),
            }
        }
        let store = Self::build(groups, concepts, &mut warnings)?;
        Ok(Loaded { store, warnings })
    }

    /// Builds a store from in-memory records. Line numbers in errors are the
    /// 1-based position of the record (groups first, then concepts).
    pub fn from_records(groups: Vec<MajorGroup>, concepts: Vec<ConceptRecord>) -> Result<Self> {
        let n_groups = groups.len();
        let groups = groups.into_iter().enumerate().map(|(i, g)| (i + 1, g)).collect();
        let concepts = concepts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (n_groups + i + 1, c))
            .collect();
        Self::build(groups, concepts, &mut Vec::new())
    }

    fn build(
        mut groups: Vec<(usize, MajorGroup)>,
        mut concepts: Vec<(usize, ConceptRecord)>,
        warnings: &mut Vec<String>,
    ) -> Result<Self> {
        groups.sort_by(|a, b| a.1.group_id.cmp(&b.1.group_id).then(a.0.cmp(&b.0)));
        for pair in groups.windows(2) {
            if pair[0].1.group_id == pair[1].1.group_id {
                return Err(TaxonomyError::DuplicateId {
                    line: pair[1].0,
                    id: pair[1].1.group_id.clone(),
                    first_line: pair[0].0,
                });
            }
        }
        for (line, g) in &groups {
            if g.group_id.is_empty() {
                return Err(TaxonomyError::Schema {
                    line: *line,
                    message: "empty group_id".into(),
                });
            }
            if g.title.values().all(|t| is_blank(t)) {
                return Err(TaxonomyError::Schema {
                    line: *line,
                    message: format!("group `{}` has no non-empty title", g.group_id),
                });
            }
        }
        let group_index: HashMap<String, GroupIdx> = groups
            .iter()
            .enumerate()
            .map(|(i, (_, g))| (g.group_id.clone(), GroupIdx(i as u32)))
            .collect();

        concepts.sort_by(|a, b| a.1.concept_id.cmp(&b.1.concept_id).then(a.0.cmp(&b.0)));
        for pair in concepts.windows(2) {
            if pair[0].1.concept_id == pair[1].1.concept_id {
                return Err(TaxonomyError::DuplicateId {
                    line: pair[1].0,
                    id: pair[1].1.concept_id.clone(),
                    first_line: pair[0].0,
                });
            }
        }
        let concept_index: HashMap<String, ConceptIdx> = concepts
            .iter()
            .enumerate()
            .map(|(i, (_, c))| (c.concept_id.clone(), ConceptIdx(i as u32)))
            .collect();

        for (line, c) in &concepts {
            validate_concept(*line, c, &concepts, &concept_index, &group_index)?;
        }

        // Aliases share the occupation's description map.
        let mut alias_targets = Vec::new();
        for (i, (line, c)) in concepts.iter().enumerate() {
            if let Some(target) = &c.alias_of {
                let t = concept_index[target].index();
                let target_desc = &concepts[t].1.description;
                let carried: Vec<_> = c.description.iter().filter(|(_, d)| !is_blank(d)).collect();
                let matches = carried.iter().all(|(l, d)| target_desc.get(*l) == Some(*d));
                if !matches {
                    let msg = format!(
                        "line {line}: alias `{}` description replaced by that of `{target}`",
                        c.concept_id
                    );
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
                alias_targets.push((i, t));
            }
        }
        for (i, t) in alias_targets {
            concepts[i].1.description = concepts[t].1.description.clone();
        }

        let concepts: Vec<ConceptRecord> = concepts.into_iter().map(|(_, c)| c).collect();
        let groups: Vec<MajorGroup> = groups.into_iter().map(|(_, g)| g).collect();

        let languages: Vec<LanguageCode> = concepts
            .iter()
            .flat_map(|c| c.preferred_label.keys().chain(c.description.keys()))
            .chain(groups.iter().flat_map(|g| g.title.keys().chain(g.description.keys())))
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let lang_pos: HashMap<&LanguageCode, u16> =
            languages.iter().enumerate().map(|(i, l)| (l, i as u16)).collect();

        let mut entries = Vec::new();
        let mut entry_start = Vec::with_capacity(concepts.len() + 1);
        for (i, c) in concepts.iter().enumerate() {
            entry_start.push(entries.len() as u32);
            for (lang, text) in &c.description {
                if !is_blank(text) {
                    entries.push(Entry {
                        concept: ConceptIdx(i as u32),
                        lang: lang_pos[lang],
                    });
                }
            }
        }
        entry_start.push(entries.len() as u32);

        let n = concepts.len();
        let mut pages: Vec<Vec<ConceptIdx>> = vec![Vec::new(); n];
        for (i, c) in concepts.iter().enumerate() {
            if c.kind == ConceptKind::Occupation {
                pages[i].push(ConceptIdx(i as u32));
                pages[i].extend(c.skills().map(|s| concept_index[s]));
            }
        }
        for (i, c) in concepts.iter().enumerate() {
            if let Some(target) = &c.alias_of {
                pages[concept_index[target].index()].push(ConceptIdx(i as u32));
            }
        }
        for page in &mut pages {
            page.sort_unstable();
            page.dedup();
        }

        let mut owners: Vec<Vec<ConceptIdx>> = vec![Vec::new(); n];
        for (o, page) in pages.iter().enumerate() {
            for m in page {
                owners[m.index()].push(ConceptIdx(o as u32));
            }
        }

        let mut group_occupations: Vec<Vec<ConceptIdx>> = vec![Vec::new(); groups.len()];
        for (i, c) in concepts.iter().enumerate() {
            if let Some(g) = &c.major_group {
                group_occupations[group_index[g].index()].push(ConceptIdx(i as u32));
            }
        }
        let concept_groups: Vec<Vec<GroupIdx>> = owners
            .iter()
            .map(|os| {
                let set: BTreeSet<GroupIdx> = os
                    .iter()
                    .filter_map(|o| concepts[o.index()].major_group.as_ref())
                    .map(|g| group_index[g])
                    .collect();
                set.into_iter().collect()
            })
            .collect();
        let group_members: Vec<Vec<ConceptIdx>> = group_occupations
            .iter()
            .map(|occs| {
                let set: BTreeSet<ConceptIdx> =
                    occs.iter().flat_map(|o| pages[o.index()].iter().copied()).collect();
                set.into_iter().collect()
            })
            .collect();

        Ok(Self {
            concepts,
            concept_index,
            groups,
            group_index,
            languages,
            entries,
            entry_start,
            pages,
            owners,
            concept_groups,
            group_occupations,
            group_members,
        })
    }

    /// Writes the normalized dump: groups then concepts, each sorted by id.
    pub fn write_jsonl(&self, mut w: impl Write) -> io::Result<()> {
        for g in &self.groups {
            let line = GroupLine {
                kind: "group",
                group_id: &g.group_id,
                title: &g.title,
                description: &g.description,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        for c in &self.concepts {
            serde_json::to_writer(&mut w, c)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn concepts(&self) -> &[ConceptRecord] {
        &self.concepts
    }

    pub fn groups(&self) -> &[MajorGroup] {
        &self.groups
    }

    pub fn languages(&self) -> &[LanguageCode] {
        &self.languages
    }

    pub fn concept(&self, id: &str) -> Option<&ConceptRecord> {
        self.concept_index.get(id).map(|&i| &self.concepts[i.index()])
    }

    pub fn count_kind(&self, kind: ConceptKind) -> usize {
        self.concepts.iter().filter(|c| c.kind == kind).count()
    }

    /// The occupation itself, its aliases, and its essential and optional skills.
    pub fn occupation_page(&self, occupation_id: &str) -> Result<BTreeSet<&str>> {
        let idx = self.require_kind(occupation_id, ConceptKind::Occupation)?;
        Ok(self.ids(&self.pages[idx.index()]))
    }

    /// Union of the occupation pages of every occupation in the group.
    pub fn group_members(&self, group_id: &str) -> Result<BTreeSet<&str>> {
        let g = self
            .group_index
            .get(group_id)
            .ok_or_else(|| TaxonomyError::UnknownId(group_id.to_owned()))?;
        Ok(self.ids(&self.group_members[g.index()]))
    }

    /// `(concept_id, language)` pairs with a non-empty description, sorted by
    /// concept id then language.
    pub fn description_entries(
        &self,
        language_filter: Option<&BTreeSet<LanguageCode>>,
    ) -> Vec<(&str, &LanguageCode)> {
        self.entries
            .iter()
            .map(|e| (self.concepts[e.concept.index()].concept_id.as_str(), &self.languages[e.lang as usize]))
            .filter(|(_, l)| language_filter.is_none_or(|f| f.contains(*l)))
            .collect()
    }

    fn ids(&self, members: &[ConceptIdx]) -> BTreeSet<&str> {
        members
            .iter()
            .map(|m| self.concepts[m.index()].concept_id.as_str())
            .collect()
    }

    fn require_kind(&self, id: &str, kind: ConceptKind) -> Result<ConceptIdx> {
        let idx = self.index_of(id)?;
        let actual = self.concepts[idx.index()].kind;
        if actual != kind {
            return Err(TaxonomyError::Kind {
                id: id.to_owned(),
                expected: kind,
                actual,
            });
        }
        Ok(idx)
    }

    // Index-level accessors used by the sampler.

    pub fn index_of(&self, id: &str) -> Result<ConceptIdx> {
        self.concept_index
            .get(id)
            .copied()
            .ok_or_else(|| TaxonomyError::UnknownId(id.to_owned()))
    }

    pub fn record(&self, c: ConceptIdx) -> &ConceptRecord {
        &self.concepts[c.index()]
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, e: EntryId) -> (ConceptIdx, &LanguageCode) {
        let entry = self.entries[e.index()];
        (entry.concept, &self.languages[entry.lang as usize])
    }

    /// Looks up the entry for `(concept_id, language)`, if it has a description.
    pub fn find_entry(&self, id: &str, lang: &LanguageCode) -> Result<Option<EntryId>> {
        let c = self.index_of(id)?;
        let range = self.entry_range(c);
        Ok(range
            .map(|i| EntryId(i as u32))
            .find(|&e| self.entry(e).1 == lang))
    }

    /// Entry ids of concept `c`; contiguous because entries are concept-sorted.
    pub fn entry_range(&self, c: ConceptIdx) -> std::ops::Range<usize> {
        self.entry_start[c.index()] as usize..self.entry_start[c.index() + 1] as usize
    }

    pub fn entries_of(&self, c: ConceptIdx) -> usize {
        self.entry_range(c).len()
    }

    /// Page members of an occupation (empty for other kinds).
    pub fn page(&self, occupation: ConceptIdx) -> &[ConceptIdx] {
        &self.pages[occupation.index()]
    }

    /// Occupations whose page contains `c`.
    pub fn owners(&self, c: ConceptIdx) -> &[ConceptIdx] {
        &self.owners[c.index()]
    }

    /// Major groups `c` belongs to (skills inherit every owner's group).
    pub fn groups_of(&self, c: ConceptIdx) -> &[GroupIdx] {
        &self.concept_groups[c.index()]
    }

    pub fn members(&self, g: GroupIdx) -> &[ConceptIdx] {
        &self.group_members[g.index()]
    }

    pub fn group_occupations(&self, g: GroupIdx) -> &[ConceptIdx] {
        &self.group_occupations[g.index()]
    }
}

fn validate_concept(
    line: usize,
    c: &ConceptRecord,
    all: &[(usize, ConceptRecord)],
    concept_index: &HashMap<String, ConceptIdx>,
    group_index: &HashMap<String, GroupIdx>,
) -> Result<()> {
    let schema = |message: String| Err(TaxonomyError::Schema { line, message });
    let dangling = |field, target: &str| {
        Err(TaxonomyError::DanglingReference {
            line,
            field,
            target: target.to_owned(),
        })
    };
    if c.concept_id.is_empty() {
        return schema("empty concept_id".into());
    }
    let kind_of = |id: &str| concept_index.get(id).map(|i| all[i.index()].1.kind);

    match (c.kind, &c.alias_of) {
        (ConceptKind::Alias, None) => return schema("alias requires `alias_of`".into()),
        (ConceptKind::Alias, Some(target)) => match kind_of(target) {
            None => return dangling("alias_of", target),
            Some(ConceptKind::Occupation) => {}
            Some(other) => return schema(format!("alias_of `{target}` is a {other}, expected occupation")),
        },
        (_, Some(_)) => return schema(format!("`alias_of` is only allowed on aliases, not on a {}", c.kind)),
        (_, None) => {}
    }

    match (c.kind, &c.major_group) {
        (ConceptKind::Occupation, None) => return schema("occupation requires `major_group`".into()),
        (ConceptKind::Occupation, Some(g)) if !group_index.contains_key(g) => {
            return dangling("major_group", g)
        }
        (ConceptKind::Occupation, Some(_)) => {}
        (_, Some(_)) => return schema(format!("`major_group` is only allowed on occupations, not on a {}", c.kind)),
        (_, None) => {}
    }

    if c.kind != ConceptKind::Occupation && c.skills().next().is_some() {
        return schema(format!("skill lists are only allowed on occupations, not on a {}", c.kind));
    }
    for (field, list) in [("essential_skills", &c.essential_skills), ("optional_skills", &c.optional_skills)] {
        for s in list {
            match kind_of(s) {
                None => return dangling(field, s),
                Some(ConceptKind::Skill) => {}
                Some(other) => return schema(format!("{field} entry `{s}` is a {other}, expected skill")),
            }
        }
    }
    Ok(())
}
