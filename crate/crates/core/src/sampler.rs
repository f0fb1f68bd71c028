//! Relation-labeled pair sampling.
//!
//! An anchor is a uniformly drawn description entry. Its partner is drawn
//! under one of three relations, each chosen with probability 1/3:
//!
//! * **Linked**: another concept from the anchor's occupation page.
//! * **Grouped**: a concept sharing a major group with the anchor. In strict
//!   mode partners that are also linked to the anchor are excluded.
//! * **Random**: any entry. In strict mode partners that are linked or grouped
//!   with the anchor are excluded.
//!
//! Partners are never the anchor's own concept, and their language is
//! unconstrained. With strict mode on, [`verify_relation`] recovers the
//! assigned label of every sample.
//!
//! Exclusions are handled by rejection sampling from a superset with an exact
//! enumeration fallback once `max_retries` attempts fail. Both stages are
//! uniform over the eligible set, so the mixture is too.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Exec;
use crate::rng;
use crate::taxonomy::{ConceptIdx, EntryId, GroupIdx, LanguageCode, TaxonomyError, TaxonomyStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Random = 0,
    Linked = 1,
    Grouped = 2,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::Random, Relation::Linked, Relation::Grouped];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Random => "random",
            Relation::Linked => "linked",
            Relation::Grouped => "grouped",
        }
    }
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("taxonomy has no description entries")]
    EmptyCorpus,
    #[error("no {} partner for anchor `{anchor}`", relation.name())]
    DegenerateRelation { relation: Relation, anchor: String },
    #[error("no anchor admitted any relation after {0} attempts")]
    ExhaustedRetries(usize),
    #[error("max_retries must be at least 1")]
    InvalidConfig,
    #[error("no description entry for `{id}` in `{lang}`")]
    UnknownEntry { id: String, lang: LanguageCode },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub seed: u64,
    pub strict_disjoint_random: bool,
    pub max_retries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            strict_disjoint_random: true,
            max_retries: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConceptRef {
    pub concept_id: String,
    pub lang: LanguageCode,
}

/// Anchor/partner pair with its relation label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "PairRecord", into = "PairRecord")]
pub struct PairSample {
    pub anchor: ConceptRef,
    pub partner: ConceptRef,
    pub relation: Relation,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    anchor_id: String,
    anchor_lang: LanguageCode,
    partner_id: String,
    partner_lang: LanguageCode,
    relation: Relation,
}

impl From<PairRecord> for PairSample {
    fn from(r: PairRecord) -> Self {
        Self {
            anchor: ConceptRef { concept_id: r.anchor_id, lang: r.anchor_lang },
            partner: ConceptRef { concept_id: r.partner_id, lang: r.partner_lang },
            relation: r.relation,
        }
    }
}

impl From<PairSample> for PairRecord {
    fn from(p: PairSample) -> Self {
        Self {
            anchor_id: p.anchor.concept_id,
            anchor_lang: p.anchor.lang,
            partner_id: p.partner.concept_id,
            partner_lang: p.partner.lang,
            relation: p.relation,
        }
    }
}

/// Entry-level pair, cheap to copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairIds {
    pub anchor: EntryId,
    pub partner: EntryId,
    pub relation: Relation,
}

impl PairIds {
    pub fn resolve(&self, store: &TaxonomyStore) -> PairSample {
        let side = |e| {
            let (c, lang) = store.entry(e);
            ConceptRef {
                concept_id: store.record(c).concept_id.clone(),
                lang: lang.clone(),
            }
        };
        PairSample {
            anchor: side(self.anchor),
            partner: side(self.partner),
            relation: self.relation,
        }
    }
}

/// Pairs per independent generator stream in [`Sampler::sample_batch`].
pub const BATCH_CHUNK: usize = 256;

fn intersects<T: Ord>(a: &[T], b: &[T]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// True when some occupation page contains both concepts.
pub fn linked(store: &TaxonomyStore, a: ConceptIdx, b: ConceptIdx) -> bool {
    intersects(store.owners(a), store.owners(b))
}

/// True when the concepts share a major group.
pub fn grouped(store: &TaxonomyStore, a: ConceptIdx, b: ConceptIdx) -> bool {
    intersects(store.groups_of(a), store.groups_of(b))
}

/// Strongest true relation between two concepts (Linked > Grouped > Random).
pub fn relation_between(store: &TaxonomyStore, a: ConceptIdx, b: ConceptIdx) -> Relation {
    if linked(store, a, b) {
        Relation::Linked
    } else if grouped(store, a, b) {
        Relation::Grouped
    } else {
        Relation::Random
    }
}

/// Recomputes the relation of a pair from the graph.
pub fn verify_relation(store: &TaxonomyStore, pair: &PairSample) -> Result<Relation, SamplerError> {
    for side in [&pair.anchor, &pair.partner] {
        if store.find_entry(&side.concept_id, &side.lang)?.is_none() {
            return Err(SamplerError::UnknownEntry {
                id: side.concept_id.clone(),
                lang: side.lang.clone(),
            });
        }
    }
    let a = store.index_of(&pair.anchor.concept_id)?;
    let b = store.index_of(&pair.partner.concept_id)?;
    Ok(relation_between(store, a, b))
}

pub struct Sampler<'s> {
    store: &'s TaxonomyStore,
    config: SamplerConfig,
    // Per group: cumulative entry counts over its member concepts.
    group_cum: Vec<Vec<usize>>,
}

impl<'s> Sampler<'s> {
    pub fn new(store: &'s TaxonomyStore, config: SamplerConfig) -> Result<Self, SamplerError> {
        if config.max_retries == 0 {
            return Err(SamplerError::InvalidConfig);
        }
        if store.entry_count() == 0 {
            return Err(SamplerError::EmptyCorpus);
        }
        let group_cum = (0..store.groups().len())
            .map(|g| {
                store
                    .members(GroupIdx(g as u32))
                    .iter()
                    .scan(0, |acc, &c| {
                        *acc += store.entries_of(c);
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { store, config, group_cum })
    }

    pub fn store(&self) -> &'s TaxonomyStore {
        self.store
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Uniform over all description entries.
    pub fn sample_anchor(&self, rng: &mut rng::Rng) -> EntryId {
        EntryId(rng.random_range(0..self.store.entry_count()) as u32)
    }

    fn concept_of(&self, e: EntryId) -> ConceptIdx {
        self.store.entry(e).0
    }

    fn anchor_name(&self, c: ConceptIdx) -> String {
        self.store.record(c).concept_id.clone()
    }

    fn degenerate(&self, relation: Relation, anchor: ConceptIdx) -> SamplerError {
        SamplerError::DegenerateRelation {
            relation,
            anchor: self.anchor_name(anchor),
        }
    }

    /// Uniform entry among `concepts`, skipping concept `skip`.
    fn draw_from(&self, concepts: &[ConceptIdx], skip: ConceptIdx, rng: &mut rng::Rng) -> Option<EntryId> {
        let weight = |c: &ConceptIdx| if *c == skip { 0 } else { self.store.entries_of(*c) };
        let total: usize = concepts.iter().map(weight).sum();
        if total == 0 {
            return None;
        }
        let mut u = rng.random_range(0..total);
        for c in concepts {
            let w = weight(c);
            if u < w {
                return Some(EntryId((self.store.entry_range(*c).start + u) as u32));
            }
            u -= w;
        }
        unreachable!("u < total")
    }

    /// Uniform entry over the whole corpus, skipping concept `skip`.
    fn draw_any_except(&self, skip: ConceptIdx, rng: &mut rng::Rng) -> Option<EntryId> {
        let block = self.store.entry_range(skip);
        let total = self.store.entry_count() - block.len();
        if total == 0 {
            return None;
        }
        let mut u = rng.random_range(0..total);
        if u >= block.start {
            u += block.len();
        }
        Some(EntryId(u as u32))
    }

    fn linked_partner(&self, anchor: ConceptIdx, rng: &mut rng::Rng) -> Option<EntryId> {
        let eligible: Vec<ConceptIdx> = self
            .store
            .owners(anchor)
            .iter()
            .copied()
            .filter(|&o| self.store.page(o).iter().any(|&m| m != anchor && self.store.entries_of(m) > 0))
            .collect();
        if eligible.is_empty() {
            return None;
        }
        let owner = eligible[rng.random_range(0..eligible.len())];
        self.draw_from(self.store.page(owner), anchor, rng)
    }

    fn grouped_ok(&self, anchor: ConceptIdx, c: ConceptIdx) -> bool {
        c != anchor && !(self.config.strict_disjoint_random && linked(self.store, anchor, c))
    }

    fn grouped_partner(&self, anchor: ConceptIdx, rng: &mut rng::Rng) -> Option<EntryId> {
        let groups = self.store.groups_of(anchor);
        if groups.is_empty() {
            return None;
        }
        let weights: Vec<usize> = groups
            .iter()
            .map(|g| self.group_cum[g.index()].last().copied().unwrap_or(0))
            .collect();
        let total: usize = weights.iter().sum();
        if total > 0 {
            for _ in 0..self.config.max_retries {
                let mut u = rng.random_range(0..total);
                let gi = weights
                    .iter()
                    .position(|&w| {
                        let hit = u < w;
                        if !hit {
                            u -= w;
                        }
                        hit
                    })
                    .expect("u < total");
                let g = groups[gi];
                let cum = &self.group_cum[g.index()];
                let k = cum.partition_point(|&x| x <= u);
                let c = self.store.members(g)[k];
                let before = if k == 0 { 0 } else { cum[k - 1] };
                let entry = EntryId((self.store.entry_range(c).start + u - before) as u32);
                // A concept reachable through m of the anchor's groups is
                // over-represented m times; thin it back to uniform.
                let multiplicity = if groups.len() == 1 {
                    1
                } else {
                    self.store.groups_of(c).iter().filter(|x| groups.contains(x)).count()
                };
                if multiplicity > 1 && rng.random_range(0..multiplicity) != 0 {
                    continue;
                }
                if self.grouped_ok(anchor, c) {
                    return Some(entry);
                }
            }
        }
        let mut candidates: Vec<ConceptIdx> = groups
            .iter()
            .flat_map(|g| self.store.members(*g).iter().copied())
            .filter(|&c| self.grouped_ok(anchor, c))
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        self.draw_from(&candidates, anchor, rng)
    }

    fn random_ok(&self, anchor: ConceptIdx, c: ConceptIdx) -> bool {
        !self.config.strict_disjoint_random
            || (!linked(self.store, anchor, c) && !grouped(self.store, anchor, c))
    }

    fn random_partner(&self, anchor: ConceptIdx, rng: &mut rng::Rng) -> Option<EntryId> {
        for _ in 0..self.config.max_retries {
            let e = self.draw_any_except(anchor, rng)?;
            if self.random_ok(anchor, self.concept_of(e)) {
                return Some(e);
            }
        }
        let n = self.store.concepts().len();
        let candidates: Vec<ConceptIdx> = (0..n as u32)
            .map(ConceptIdx)
            .filter(|&c| c != anchor && self.random_ok(anchor, c))
            .collect();
        self.draw_from(&candidates, anchor, rng)
    }

    /// Partner for `anchor` under `relation`.
    pub fn sample_partner(
        &self,
        anchor: EntryId,
        relation: Relation,
        rng: &mut rng::Rng,
    ) -> Result<EntryId, SamplerError> {
        let a = self.concept_of(anchor);
        let partner = match relation {
            Relation::Linked => self.linked_partner(a, rng),
            Relation::Grouped => self.grouped_partner(a, rng),
            Relation::Random => self.random_partner(a, rng),
        };
        partner.ok_or_else(|| self.degenerate(relation, a))
    }

    /// Draws a relation uniformly, then a partner. A relation that is
    /// degenerate for the anchor is dropped and the relation redrawn from the
    /// rest; the anchor is redrawn only if all three fail.
    pub fn sample_pair_ids(&self, rng: &mut rng::Rng) -> Result<PairIds, SamplerError> {
        for _ in 0..self.config.max_retries {
            let anchor = self.sample_anchor(rng);
            let mut remaining = Relation::ALL.to_vec();
            while !remaining.is_empty() {
                let relation = remaining.remove(rng.random_range(0..remaining.len()));
                match self.sample_partner(anchor, relation, rng) {
                    Ok(partner) => return Ok(PairIds { anchor, partner, relation }),
                    Err(SamplerError::DegenerateRelation { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Err(SamplerError::ExhaustedRetries(self.config.max_retries))
    }

    pub fn sample_pair(&self, rng: &mut rng::Rng) -> Result<PairSample, SamplerError> {
        self.sample_pair_ids(rng).map(|p| p.resolve(self.store))
    }

    /// `n` pairs from the configured seed. Chunk `k` of [`BATCH_CHUNK`] pairs
    /// uses stream `(seed, "pairs", k)`, so output does not depend on `exec`.
    pub fn sample_batch_ids(&self, n: usize, exec: Exec) -> Result<Vec<PairIds>, SamplerError> {
        let chunks = n.div_ceil(BATCH_CHUNK);
        let parts = exec.try_map_range(chunks, |k| {
            let mut rng = rng::derive(self.config.seed, "pairs", k as u64);
            let len = BATCH_CHUNK.min(n - k * BATCH_CHUNK);
            (0..len).map(|_| self.sample_pair_ids(&mut rng)).collect::<Result<Vec<_>, _>>()
        })?;
        Ok(parts.into_iter().flatten().collect())
    }

    pub fn sample_batch(&self, n: usize, exec: Exec) -> Result<Vec<PairSample>, SamplerError> {
        Ok(self
            .sample_batch_ids(n, exec)?
            .iter()
            .map(|p| p.resolve(self.store))
            .collect())
    }
}
