//! Dynamic masked-token corruption.
//!
//! Every call draws a fresh pattern from the supplied generator, so the same
//! sequence is corrupted differently each time it is fed to the model.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::sampler::{PairIds, Relation};
use crate::taxonomy::TaxonomyStore;
use crate::tokenizer::{self, is_special, TokenId, TokenSequence, Tokenizer, TokenizerError, FIRST_TOKEN, MASK};

/// Serialized label for positions that carry no masked-token target.
pub const IGNORE: i64 = -100;

#[derive(Debug, Error, PartialEq)]
pub enum MaskingError {
    #[error("select_rate must lie strictly between 0 and 1, got {0}")]
    SelectRate(f64),
    #[error("replacement fractions must be non-negative and sum to 1, got {0}, {1}, {2}")]
    Fractions(f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskingPolicy {
    pub select_rate: f64,
    pub mask_frac: f64,
    pub random_frac: f64,
    pub keep_frac: f64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self {
            select_rate: 0.15,
            mask_frac: 0.8,
            random_frac: 0.1,
            keep_frac: 0.1,
        }
    }
}

impl MaskingPolicy {
    pub fn validate(&self) -> Result<(), MaskingError> {
        if !(self.select_rate > 0.0 && self.select_rate < 1.0) {
            return Err(MaskingError::SelectRate(self.select_rate));
        }
        let fr = [self.mask_frac, self.random_frac, self.keep_frac];
        if fr.iter().any(|f| f.is_nan() || *f < 0.0) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(MaskingError::Fractions(fr[0], fr[1], fr[2]));
        }
        Ok(())
    }
}

/// What happened to a selected position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Replacement {
    Mask,
    Random,
    Keep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "InstanceRecord", try_from = "InstanceRecord")]
pub struct MaskedInstance {
    pub input_ids: Vec<TokenId>,
    /// Original id at selected positions, `None` elsewhere.
    pub mlm_labels: Vec<Option<TokenId>>,
    pub erp_label: Relation,
    pub boundary: usize,
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    input_ids: Vec<TokenId>,
    mlm_labels: Vec<i64>,
    erp_label: u8,
    boundary: usize,
}

impl From<MaskedInstance> for InstanceRecord {
    fn from(m: MaskedInstance) -> Self {
        Self {
            input_ids: m.input_ids,
            mlm_labels: m.mlm_labels.iter().map(|l| l.map_or(IGNORE, i64::from)).collect(),
            erp_label: m.erp_label as u8,
            boundary: m.boundary,
        }
    }
}

impl TryFrom<InstanceRecord> for MaskedInstance {
    type Error = String;
    fn try_from(r: InstanceRecord) -> Result<Self, String> {
        if r.input_ids.len() != r.mlm_labels.len() {
            return Err("input_ids and mlm_labels differ in length".into());
        }
        let mlm_labels = r
            .mlm_labels
            .iter()
            .map(|&l| match l {
                IGNORE => Ok(None),
                l => TokenId::try_from(l).map(Some).map_err(|_| format!("invalid label {l}")),
            })
            .collect::<Result<_, _>>()?;
        let erp_label = Relation::from_index(r.erp_label as usize).ok_or("erp_label must be 0, 1 or 2")?;
        Ok(Self {
            input_ids: r.input_ids,
            mlm_labels,
            erp_label,
            boundary: r.boundary,
        })
    }
}

impl MaskedInstance {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    pub fn labeled_positions(&self) -> usize {
        self.mlm_labels.iter().filter(|l| l.is_some()).count()
    }

    /// Input with every labeled position restored to its original id.
    pub fn reconstruct(&self) -> Vec<TokenId> {
        self.input_ids
            .iter()
            .zip(&self.mlm_labels)
            .map(|(&id, l)| l.unwrap_or(id))
            .collect()
    }
}

/// Corrupts `seq`, also reporting the replacement applied at each selected
/// position (useful for statistics).
pub fn mask_sequence_traced(
    seq: &TokenSequence,
    vocab_size: usize,
    policy: &MaskingPolicy,
    erp_label: Relation,
    rng: &mut rng::Rng,
) -> (MaskedInstance, Vec<Option<Replacement>>) {
    assert!(vocab_size > FIRST_TOKEN as usize, "vocabulary has no ordinary tokens");
    let n = seq.len();
    let mut input_ids = seq.ids().to_vec();
    let mut mlm_labels = vec![None; n];
    let mut trace = vec![None; n];
    for i in 0..n {
        let original = input_ids[i];
        if is_special(original) || rng.random::<f64>() >= policy.select_rate {
            continue;
        }
        mlm_labels[i] = Some(original);
        let r: f64 = rng.random();
        let replacement = if r < policy.mask_frac {
            input_ids[i] = MASK;
            Replacement::Mask
        } else if r < policy.mask_frac + policy.random_frac {
            input_ids[i] = rng.random_range(FIRST_TOKEN..vocab_size as TokenId);
            Replacement::Random
        } else {
            Replacement::Keep
        };
        trace[i] = Some(replacement);
    }
    let inst = MaskedInstance {
        input_ids,
        mlm_labels,
        erp_label,
        boundary: seq.boundary(),
    };
    (inst, trace)
}

/// Each non-special position is selected with probability `select_rate`;
/// selected positions become `[MASK]`, a random ordinary token, or stay as is.
pub fn mask_sequence(
    seq: &TokenSequence,
    vocab_size: usize,
    policy: &MaskingPolicy,
    erp_label: Relation,
    rng: &mut rng::Rng,
) -> MaskedInstance {
    mask_sequence_traced(seq, vocab_size, policy, erp_label, rng).0
}

/// Tokenizes a sampled pair into `[CLS] A [SEP] B [SEP]` and masks it.
pub fn pretrain_instance(
    store: &TaxonomyStore,
    vocab: &impl Tokenizer,
    pair: &PairIds,
    max_len: usize,
    policy: &MaskingPolicy,
    rng: &mut rng::Rng,
) -> Result<MaskedInstance, TokenizerError> {
    let side = |e| {
        let (c, lang) = store.entry(e);
        let rec = store.record(c);
        (rec.label(lang), rec.description_in(lang))
    };
    let (la, da) = side(pair.anchor);
    let (lb, db) = side(pair.partner);
    let seq = tokenizer::build_pair_input(vocab, la, da, lb, db, max_len)?;
    Ok(mask_sequence(&seq, vocab.vocab_size(), policy, pair.relation, rng))
}
