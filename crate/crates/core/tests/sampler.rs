use std::collections::{BTreeSet, HashMap};

use esco_pretrain::par::Exec;
use esco_pretrain::rng;
use esco_pretrain::sampler::{linked, verify_relation, Relation, Sampler, SamplerConfig, SamplerError};
use esco_pretrain::synth::{synthetic_taxonomy, SynthConfig};
use esco_pretrain::taxonomy::{load_taxonomy, EntryId, LanguageCode, LoadOptions, TaxonomyStore};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/small.jsonl");

fn fixture() -> TaxonomyStore {
    load_taxonomy(FIXTURE).unwrap()
}

fn rich() -> TaxonomyStore {
    synthetic_taxonomy(&SynthConfig::default())
}

fn cfg(seed: u64) -> SamplerConfig {
    SamplerConfig {
        seed,
        ..Default::default()
    }
}

fn entry(store: &TaxonomyStore, id: &str, lang: &str) -> EntryId {
    store.find_entry(id, &LanguageCode::new(lang).unwrap()).unwrap().unwrap()
}

fn concept_id(store: &TaxonomyStore, e: EntryId) -> String {
    store.record(store.entry(e).0).concept_id.clone()
}

fn partners(store: &TaxonomyStore, anchor: EntryId, relation: Relation, draws: usize) -> BTreeSet<String> {
    let s = Sampler::new(store, cfg(1)).unwrap();
    let mut r = rng::from_seed(2);
    (0..draws)
        .map(|_| concept_id(store, s.sample_partner(anchor, relation, &mut r).unwrap()))
        .collect()
}

fn ids(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

const FOUR_ENTRIES: &str = r#"{"kind": "group", "group_id": "G", "title": {"en": "g"}, "description": {}}
{"concept_id": "O", "kind": "occupation", "esco_code": "1", "alias_of": null, "major_group": "G", "preferred_label": {"en": "o"}, "description": {"en": "x", "da": "y"}, "essential_skills": ["S"], "optional_skills": []}
{"concept_id": "S", "kind": "skill", "esco_code": "", "alias_of": null, "major_group": null, "preferred_label": {"en": "s"}, "description": {"en": "z", "da": "w"}, "essential_skills": [], "optional_skills": []}
"#;

#[test]
fn anchors_are_uniform_over_entries() {
    let store = TaxonomyStore::from_jsonl_str(FOUR_ENTRIES, LoadOptions::default()).unwrap().store;
    assert_eq!(store.entry_count(), 4);
    let s = Sampler::new(&store, cfg(0)).unwrap();
    let mut r = rng::from_seed(11);
    let mut counts = [0usize; 4];
    let n = 40_000;
    for _ in 0..n {
        counts[s.sample_anchor(&mut r).index()] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 0.25).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn single_entry_store_always_returns_it() {
    let one = FOUR_ENTRIES
        .replace(r#", "da": "y""#, "")
        .replace(r#"{"en": "z", "da": "w"}"#, "{}");
    let store = TaxonomyStore::from_jsonl_str(&one, LoadOptions::default()).unwrap().store;
    assert_eq!(store.entry_count(), 1);
    let s = Sampler::new(&store, cfg(0)).unwrap();
    let mut r = rng::from_seed(3);
    assert!((0..100).all(|_| s.sample_anchor(&mut r).index() == 0));
}

#[test]
fn linked_partners_come_from_the_page() {
    let store = fixture();
    let got = partners(&store, entry(&store, "O1", "en"), Relation::Linked, 2000);
    assert_eq!(got, ids(&["A1", "S1", "S2"]));
    // S2 is on the pages of both O1 and O2.
    let got = partners(&store, entry(&store, "S2", "en"), Relation::Linked, 2000);
    assert_eq!(got, ids(&["O1", "A1", "S1", "O2", "A2", "S3"]));
}

#[test]
fn strict_grouped_partners_exclude_linked_concepts() {
    let store = fixture();
    let anchor = entry(&store, "O1", "en");
    let got = partners(&store, anchor, Relation::Grouped, 2000);
    // Eligible set by enumeration: same group, not on a shared page.
    let a = store.entry(anchor).0;
    let expected: BTreeSet<String> = store
        .group_members("G1")
        .unwrap()
        .into_iter()
        .filter(|c| !linked(&store, a, store.index_of(c).unwrap()))
        .map(str::to_owned)
        .collect();
    assert_eq!(expected, ids(&["O2", "A2", "S3"]));
    assert_eq!(got, expected);
}

#[test]
fn empty_page_is_degenerate_for_linked() {
    let store = fixture();
    let s = Sampler::new(&store, cfg(0)).unwrap();
    let err = s
        .sample_partner(entry(&store, "O3", "en"), Relation::Linked, &mut rng::from_seed(0))
        .unwrap_err();
    assert!(matches!(err, SamplerError::DegenerateRelation { relation: Relation::Linked, .. }));
}

#[test]
fn singleton_pages_never_yield_linked() {
    let cfg_synth = SynthConfig {
        skills: 0,
        aliases_per_occupation: 0,
        ..Default::default()
    };
    let store = synthetic_taxonomy(&cfg_synth);
    let pairs = Sampler::new(&store, cfg(5)).unwrap().sample_batch(3000, Exec::default()).unwrap();
    assert!(pairs.iter().all(|p| p.relation != Relation::Linked));
    assert!(pairs.iter().any(|p| p.relation == Relation::Grouped));
}

#[test]
fn relations_are_uniform_and_sound() {
    let store = rich();
    let n = 30_000;
    let pairs = Sampler::new(&store, cfg(42)).unwrap().sample_batch(n, Exec::default()).unwrap();
    let bound = 3.0 * (2.0f64 / 9.0 / n as f64).sqrt();
    let mut counts: HashMap<Relation, usize> = HashMap::new();
    for p in &pairs {
        *counts.entry(p.relation).or_default() += 1;
        assert_eq!(verify_relation(&store, p).unwrap(), p.relation);
        assert_ne!((&p.anchor.concept_id, &p.anchor.lang), (&p.partner.concept_id, &p.partner.lang));
    }
    for r in Relation::ALL {
        let f = counts[&r] as f64 / n as f64;
        assert!((f - 1.0 / 3.0).abs() < bound, "{r:?}: {f}");
    }
}

#[test]
fn languages_cross_at_the_expected_rate() {
    // Every concept of the synthetic store is described in all three
    // languages, so partner and anchor languages differ with probability 2/3.
    let store = rich();
    let pairs = Sampler::new(&store, cfg(9)).unwrap().sample_batch(20_000, Exec::default()).unwrap();
    let cross = pairs.iter().filter(|p| p.anchor.lang != p.partner.lang).count() as f64 / pairs.len() as f64;
    assert!((cross - 2.0 / 3.0).abs() < 0.02, "{cross}");
}

#[test]
fn streams_are_deterministic() {
    let store = rich();
    let s = Sampler::new(&store, cfg(7)).unwrap();
    let a = s.sample_batch(1000, Exec::Sequential).unwrap();
    let b = s.sample_batch(1000, Exec::Parallel).unwrap();
    assert_eq!(a, b);
    let c = Sampler::new(&store, cfg(8)).unwrap().sample_batch(1000, Exec::Sequential).unwrap();
    assert_ne!(a, c);
    let mut r1 = rng::from_seed(4);
    let mut r2 = rng::from_seed(4);
    for _ in 0..100 {
        assert_eq!(s.sample_pair(&mut r1).unwrap(), s.sample_pair(&mut r2).unwrap());
    }
    assert!(s.sample_batch(0, Exec::default()).unwrap().is_empty());
}

#[test]
fn lenient_random_pairs_may_be_related() {
    let store = fixture();
    let lenient = SamplerConfig {
        seed: 3,
        strict_disjoint_random: false,
        max_retries: 64,
    };
    let pairs = Sampler::new(&store, lenient).unwrap().sample_batch(5000, Exec::default()).unwrap();
    let mislabeled = pairs
        .iter()
        .filter(|p| p.relation == Relation::Random && verify_relation(&store, p).unwrap() != Relation::Random)
        .count();
    assert!(mislabeled > 0);
}
