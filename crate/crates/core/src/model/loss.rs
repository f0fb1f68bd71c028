//! Joint masked-token and relation-prediction objective.

use serde::{Deserialize, Serialize};

use super::encoder::{self, erp_logits_of, mlm_logits_at, ForwardOutput};
use super::linalg::{argmax, log_sum_exp, softmax, Mat};
use super::params::{pair_mut, Gradients, Parameters};
use super::ModelError;
use crate::masking::MaskedInstance;
use crate::par::Exec;
use crate::rng;
use crate::sampler::Relation;
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mlm: f64,
    pub erp: f64,
}

/// How masked-token losses are pooled across a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlmReduction {
    /// Mean over every labeled position in the batch.
    #[default]
    Mean,
    /// Per-instance sum, averaged over instances.
    Sum,
}

/// `-ln softmax(z)[target]`.
pub fn nll(z: &[f64], target: usize) -> f64 {
    log_sum_exp(z) - z[target]
}

/// Loss of one instance: mean masked-token NLL over labeled positions (0 when
/// none are labeled) plus the relation NLL.
pub fn loss(output: &ForwardOutput, mlm_labels: &[Option<TokenId>], erp_label: Relation) -> LossParts {
    assert_eq!(output.mlm_logits.rows, mlm_labels.len(), "labels must align with positions");
    let (sum, n) = mlm_labels
        .iter()
        .enumerate()
        .filter_map(|(t, l)| l.map(|y| nll(output.mlm_logits.row(t), y as usize)))
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    let mlm = if n == 0 { 0.0 } else { sum / n as f64 };
    let erp = nll(&output.erp_logits, erp_label.index());
    LossParts { total: mlm + erp, mlm, erp }
}

/// Sufficient statistics of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InstanceStats {
    pub mlm_nll_sum: f64,
    pub mlm_labeled: usize,
    pub mlm_correct: usize,
    pub erp_nll: f64,
    pub erp_correct: bool,
    pub erp_pred: usize,
}

/// Pooled statistics and the reduced loss of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub instances: Vec<InstanceStats>,
    pub loss: LossParts,
}

impl BatchStats {
    pub fn from_instances(instances: Vec<InstanceStats>, reduction: MlmReduction) -> Self {
        let b = instances.len();
        let (mut nll, mut lab, mut erp) = (0.0, 0usize, 0.0);
        for s in &instances {
            nll += s.mlm_nll_sum;
            lab += s.mlm_labeled;
            erp += s.erp_nll;
        }
        let mlm = match reduction {
            MlmReduction::Mean if lab > 0 => nll / lab as f64,
            MlmReduction::Sum if b > 0 => nll / b as f64,
            _ => 0.0,
        };
        let erp = if b == 0 { 0.0 } else { erp / b as f64 };
        Self {
            instances,
            loss: LossParts { total: mlm + erp, mlm, erp },
        }
    }

    pub fn labeled(&self) -> usize {
        self.instances.iter().map(|s| s.mlm_labeled).sum()
    }

    /// Fraction of labeled positions predicted correctly, if any.
    pub fn mlm_accuracy(&self) -> Option<f64> {
        let n = self.labeled();
        let c: usize = self.instances.iter().map(|s| s.mlm_correct).sum();
        (n > 0).then(|| c as f64 / n as f64)
    }

    pub fn erp_accuracy(&self) -> Option<f64> {
        let n = self.instances.len();
        let c = self.instances.iter().filter(|s| s.erp_correct).count();
        (n > 0).then(|| c as f64 / n as f64)
    }
}

/// Scale applied to each position's masked-token gradient and to each
/// instance's relation gradient.
fn weights(batch: &[MaskedInstance], reduction: MlmReduction) -> (f64, f64) {
    let b = batch.len() as f64;
    let mlm = match reduction {
        MlmReduction::Mean => {
            let n: usize = batch.iter().map(MaskedInstance::labeled_positions).sum();
            if n == 0 {
                0.0
            } else {
                1.0 / n as f64
            }
        }
        MlmReduction::Sum => 1.0 / b,
    };
    (mlm, 1.0 / b)
}

/// Dropout streams for a batch: instance `i` draws from
/// `(seed, "dropout", first_index + i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutStreams {
    pub seed: u64,
    pub first_index: u64,
}

fn instance_pass(
    params: &Parameters,
    inst: &MaskedInstance,
    scales: Option<(f64, f64)>,
    dropout: Option<&mut rng::Rng>,
) -> (InstanceStats, Option<Gradients>) {
    let trace = encoder::encode(params, &inst.input_ids, dropout);
    let hidden = &trace.hidden;
    let l = &params.layout;
    let mut stats = InstanceStats::default();
    let mut grads = scales.map(|_| Gradients::zeros(params.len()));
    let mut dhidden = Mat::zeros(hidden.rows, hidden.cols);
    let (w_mlm, w_erp) = scales.unwrap_or((0.0, 0.0));

    for (t, label) in inst.mlm_labels.iter().enumerate() {
        let Some(y) = label.map(|y| y as usize) else { continue };
        let z = mlm_logits_at(params, hidden.row(t));
        stats.mlm_nll_sum += nll(&z, y);
        stats.mlm_labeled += 1;
        stats.mlm_correct += usize::from(argmax(&z) == y);
        if let Some(g) = grads.as_mut() {
            if w_mlm != 0.0 {
                let mut dz = softmax(&z);
                dz[y] -= 1.0;
                dz.iter_mut().for_each(|x| *x *= w_mlm);
                let (dw, db) = pair_mut(&mut g.data, l.mlm_w, l.mlm_b);
                super::linalg::affine_backward(
                    hidden.row(t),
                    params.get(l.mlm_w),
                    &dz,
                    dw,
                    db,
                    dhidden.row_mut(t),
                );
            }
        }
    }

    let z = erp_logits_of(params, hidden);
    let r = inst.erp_label.index();
    stats.erp_nll = nll(&z, r);
    stats.erp_pred = argmax(&z);
    stats.erp_correct = stats.erp_pred == r;
    if let Some(g) = grads.as_mut() {
        let mut dz = softmax(&z);
        dz[r] -= 1.0;
        dz.iter_mut().for_each(|x| *x *= w_erp);
        let (dw, db) = pair_mut(&mut g.data, l.erp_w, l.erp_b);
        super::linalg::affine_backward(hidden.row(0), params.get(l.erp_w), &dz, dw, db, dhidden.row_mut(0));
        encoder::backward(params, &trace, dhidden, &mut g.data);
    }
    (stats, grads)
}

fn check_batch(params: &Parameters, batch: &[MaskedInstance]) -> Result<(), ModelError> {
    for inst in batch {
        encoder::check_ids(params, &inst.input_ids)?;
        if inst.mlm_labels.len() != inst.input_ids.len() {
            return Err(ModelError::Shape("labels must align with positions".into()));
        }
        if let Some(y) = inst.mlm_labels.iter().flatten().find(|&&y| y as usize >= params.config.vocab_size) {
            return Err(ModelError::Shape(format!("label {y} outside vocabulary")));
        }
    }
    Ok(())
}

/// Loss and accuracy statistics without gradients (dropout off).
pub fn evaluate_batch(
    params: &Parameters,
    batch: &[MaskedInstance],
    reduction: MlmReduction,
    exec: Exec,
) -> Result<BatchStats, ModelError> {
    check_batch(params, batch)?;
    let stats = exec.map_slice(batch, |inst| instance_pass(params, inst, None, None).0);
    Ok(BatchStats::from_instances(stats, reduction))
}

/// Reduced batch loss and its exact gradient. Per-instance gradients are
/// summed in batch order, so the result does not depend on `exec`.
pub fn batch_gradients(
    params: &Parameters,
    batch: &[MaskedInstance],
    reduction: MlmReduction,
    dropout: Option<DropoutStreams>,
    exec: Exec,
) -> Result<(BatchStats, Gradients), ModelError> {
    check_batch(params, batch)?;
    let scales = weights(batch, reduction);
    let parts = exec.map_range(batch.len(), |i| {
        let mut rng = dropout.map(|d| rng::derive(d.seed, "dropout", d.first_index + i as u64));
        instance_pass(params, &batch[i], Some(scales), rng.as_mut())
    });
    let mut total = Gradients::zeros(params.len());
    let mut stats = Vec::with_capacity(parts.len());
    for (s, g) in parts {
        stats.push(s);
        total.add_assign(&g.expect("gradients requested"));
    }
    if total.data.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::NonFiniteGradient);
    }
    Ok((BatchStats::from_instances(stats, reduction), total))
}
