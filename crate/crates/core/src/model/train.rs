//! Pre-training loop.
//!
//! All pairs for the run are drawn up front from the sampler seed. The last
//! `dev_fraction` of them form a fixed development set (masked once); step
//! `s` trains on the next `batch_size` of the rest, masked afresh from stream
//! `(seed, "mask", pair index)`. Because every random draw is keyed by step
//! and index, a run stopped at step `k` and resumed from its checkpoint is
//! bit-identical to an uninterrupted run.

use std::io::{self, Write};

use log::info;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointHeader};
use super::loss::{evaluate_batch, BatchStats, DropoutStreams, MlmReduction};
use super::optim::{train_step, AdamWConfig, OptimizerState, Schedule};
use super::params::{ModelConfig, Parameters};
use super::ModelError;
use crate::masking::{pretrain_instance, MaskedInstance, MaskingPolicy};
use crate::par::Exec;
use crate::rng;
use crate::sampler::{PairIds, Relation, Sampler, SamplerConfig};
use crate::taxonomy::TaxonomyStore;
use crate::tokenizer::Vocab;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub adamw: AdamWConfig,
    pub min_freq: usize,
    pub dev_fraction: f64,
    pub log_every: usize,
    pub masking: MaskingPolicy,
    pub reduction: MlmReduction,
    /// Stop after this many updates (for checkpoint/resume).
    #[serde(skip)]
    pub stop_at: Option<usize>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 1000,
            batch_size: 32,
            peak_lr: 1e-3,
            adamw: AdamWConfig::default(),
            min_freq: 1,
            dev_fraction: 0.01,
            log_every: 50,
            masking: MaskingPolicy::default(),
            reduction: MlmReduction::Mean,
            stop_at: None,
            exec: Exec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_owned()).into());
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.log_every == 0 {
            return bad("log_every must be positive");
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return bad("dev_fraction must lie strictly between 0 and 1");
        }
        self.masking.validate()?;
        Schedule::new(self.peak_lr, self.steps).validate()?;
        Ok(())
    }

    /// `(train, dev)` pair counts: dev is `dev_fraction` of the total.
    pub fn split_sizes(&self) -> (usize, usize) {
        let train = self.steps * self.batch_size;
        let total = (train as f64 / (1.0 - self.dev_fraction)).ceil() as usize;
        (train, (total - train).max(1))
    }
}

/// One row of the metrics log. Accuracies and relation-wise rates are `None`
/// when undefined (no labeled positions or no instances of that relation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub lr: f64,
    /// Mean total loss over the steps since the previous record.
    pub train_loss: f64,
    pub train_mlm_loss: f64,
    pub train_erp_loss: f64,
    pub dev_loss: f64,
    pub dev_mlm_loss: f64,
    pub dev_erp_loss: f64,
    pub mlm_acc: Option<f64>,
    pub erp_acc: Option<f64>,
    /// ERP accuracy on dev pairs of each relation, indexed by label.
    pub erp_acc_by_relation: [Option<f64>; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalAccumulator {
    pub steps: usize,
    pub total: f64,
    pub mlm: f64,
    pub erp: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub logs: Vec<LogRecord>,
    pub checkpoint: Checkpoint,
    pub vocab: Vocab,
}

struct Data<'a> {
    store: &'a TaxonomyStore,
    vocab: &'a Vocab,
    train: Vec<PairIds>,
    dev: Vec<MaskedInstance>,
}

#[allow(clippy::too_many_arguments)]
fn mask_pairs(
    data_store: &TaxonomyStore,
    vocab: &Vocab,
    pairs: &[PairIds],
    max_len: usize,
    policy: &MaskingPolicy,
    seed: u64,
    label: &str,
    first_index: usize,
    exec: Exec,
) -> Result<Vec<MaskedInstance>> {
    exec.try_map_range(pairs.len(), |i| {
        let mut r = rng::derive(seed, label, (first_index + i) as u64);
        pretrain_instance(data_store, vocab, &pairs[i], max_len, policy, &mut r).map_err(Into::into)
    })
}

fn prepare<'a>(
    store: &'a TaxonomyStore,
    vocab: &'a Vocab,
    sampler_cfg: SamplerConfig,
    model: &ModelConfig,
    run: &RunConfig,
) -> Result<Data<'a>> {
    let sampler = Sampler::new(store, sampler_cfg)?;
    let (n_train, n_dev) = run.split_sizes();
    let mut pairs = sampler.sample_batch_ids(n_train + n_dev, run.exec)?;
    let dev_pairs = pairs.split_off(n_train);
    let dev = mask_pairs(store, vocab, &dev_pairs, model.max_len, &run.masking, run.seed, "dev-mask", 0, run.exec)?;
    Ok(Data { store, vocab, train: pairs, dev })
}

fn relation_accuracy(stats: &BatchStats, dev: &[MaskedInstance], r: Relation) -> Option<f64> {
    let (mut n, mut c) = (0usize, 0usize);
    for (s, inst) in stats.instances.iter().zip(dev) {
        if inst.erp_label == r {
            n += 1;
            c += usize::from(s.erp_correct);
        }
    }
    (n > 0).then(|| c as f64 / n as f64)
}

/// Trains from scratch. `model.vocab_size` is replaced by the size of the
/// vocabulary built from `store`.
pub fn pretrain(
    store: &TaxonomyStore,
    sampler_cfg: &SamplerConfig,
    model: ModelConfig,
    run: &RunConfig,
) -> Result<PretrainOutcome> {
    run.validate()?;
    let vocab = Vocab::build(store, run.min_freq)?;
    let model = ModelConfig {
        vocab_size: vocab.size(),
        ..model
    };
    let params = Parameters::init(model, &mut rng::derive(run.seed, "init", 0))?;
    let schedule = Schedule::new(run.peak_lr, run.steps);
    let optimizer = OptimizerState::new(&params, schedule, run.adamw)?;
    let mut vocab_text = Vec::new();
    vocab.write_text(&mut vocab_text).expect("writing to memory");
    let header = CheckpointHeader {
        model,
        run: RunConfig {
            stop_at: None,
            exec: Exec::default(),
            ..run.clone()
        },
        sampler_seed: sampler_cfg.seed,
        strict: sampler_cfg.strict_disjoint_random,
        max_retries: sampler_cfg.max_retries,
        step: 0,
        schedule,
        adamw: run.adamw,
        vocab: String::from_utf8(vocab_text).expect("tokens are UTF-8"),
        logs: Vec::new(),
        interval: IntervalAccumulator::default(),
        param_count: params.len(),
    };
    let ckpt = Checkpoint { header, params, optimizer };
    continue_training(store, ckpt, vocab, run.stop_at, run.exec)
}

/// Continues a run from `ckpt` until its final step or `stop_at`.
pub fn resume(store: &TaxonomyStore, ckpt: Checkpoint, stop_at: Option<usize>, exec: Exec) -> Result<PretrainOutcome> {
    let vocab = Vocab::read_text(ckpt.header.vocab.as_bytes())?;
    if vocab.size() != ckpt.header.model.vocab_size {
        return Err(ModelError::Checkpoint("vocabulary does not match model".into()).into());
    }
    continue_training(store, ckpt, vocab, stop_at, exec)
}

fn continue_training(
    store: &TaxonomyStore,
    mut ckpt: Checkpoint,
    vocab: Vocab,
    stop_at: Option<usize>,
    exec: Exec,
) -> Result<PretrainOutcome> {
    let run = RunConfig { exec, ..ckpt.header.run.clone() };
    let sampler_cfg = SamplerConfig {
        seed: ckpt.header.sampler_seed,
        strict_disjoint_random: ckpt.header.strict,
        max_retries: ckpt.header.max_retries,
    };
    let model = ckpt.header.model;
    let data = prepare(store, &vocab, sampler_cfg, &model, &run)?;
    let b = run.batch_size;
    let last = stop_at.unwrap_or(run.steps).min(run.steps);
    let mut acc = ckpt.header.interval;
    let mut logs = std::mem::take(&mut ckpt.header.logs);
    let (params, optimizer) = (&mut ckpt.params, &mut ckpt.optimizer);

    for step in optimizer.step + 1..=last {
        let first = (step - 1) * b;
        let batch = mask_pairs(
            data.store,
            data.vocab,
            &data.train[first..first + b],
            model.max_len,
            &run.masking,
            run.seed,
            "mask",
            first,
            exec,
        )?;
        let dropout = DropoutStreams {
            seed: run.seed,
            first_index: first as u64,
        };
        let out = train_step(params, optimizer, &batch, run.reduction, Some(dropout), exec)?;
        let l = out.stats.loss;
        if !l.total.is_finite() {
            return Err(ModelError::NonFiniteGradient.into());
        }
        acc.steps += 1;
        acc.total += l.total;
        acc.mlm += l.mlm;
        acc.erp += l.erp;
        if step % run.log_every == 0 || step == run.steps {
            let dev = evaluate_batch(params, &data.dev, run.reduction, exec)?;
            let n = acc.steps as f64;
            let rec = LogRecord {
                step,
                lr: out.lr,
                train_loss: acc.total / n,
                train_mlm_loss: acc.mlm / n,
                train_erp_loss: acc.erp / n,
                dev_loss: dev.loss.total,
                dev_mlm_loss: dev.loss.mlm,
                dev_erp_loss: dev.loss.erp,
                mlm_acc: dev.mlm_accuracy(),
                erp_acc: dev.erp_accuracy(),
                erp_acc_by_relation: Relation::ALL.map(|r| relation_accuracy(&dev, &data.dev, r)),
            };
            info!(
                "step {step}: train {:.4} dev {:.4} mlm_acc {} erp_acc {}",
                rec.train_loss,
                rec.dev_loss,
                fmt_opt(rec.mlm_acc),
                fmt_opt(rec.erp_acc)
            );
            logs.push(rec);
            acc = IntervalAccumulator::default();
        }
    }
    ckpt.header.step = ckpt.optimizer.step;
    ckpt.header.interval = acc;
    ckpt.header.logs = logs.clone();
    Ok(PretrainOutcome {
        logs,
        checkpoint: ckpt,
        vocab,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.8}"))
}

pub fn write_metrics_csv(logs: &[LogRecord], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "step,train_loss,dev_loss,mlm_acc,erp_acc")?;
    for r in logs {
        writeln!(
            w,
            "{},{:.8},{:.8},{},{}",
            r.step,
            r.train_loss,
            r.dev_loss,
            fmt_opt(r.mlm_acc),
            fmt_opt(r.erp_acc)
        )?;
    }
    Ok(())
}

/// Every logged field, including the loss components and relation-wise
/// accuracies.
pub fn write_full_csv(logs: &[LogRecord], mut w: impl Write) -> io::Result<()> {
    writeln!(
        w,
        "step,lr,train_loss,train_mlm_loss,train_erp_loss,dev_loss,dev_mlm_loss,dev_erp_loss,mlm_acc,erp_acc,erp_acc_random,erp_acc_linked,erp_acc_grouped"
    )?;
    for r in logs {
        let [a, b, c] = r.erp_acc_by_relation.map(fmt_opt);
        writeln!(
            w,
            "{},{:e},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{},{},{a},{b},{c}",
            r.step,
            r.lr,
            r.train_loss,
            r.train_mlm_loss,
            r.train_erp_loss,
            r.dev_loss,
            r.dev_mlm_loss,
            r.dev_erp_loss,
            fmt_opt(r.mlm_acc),
            fmt_opt(r.erp_acc)
        )?;
    }
    Ok(())
}
