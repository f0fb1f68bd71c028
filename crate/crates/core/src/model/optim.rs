//! AdamW with linear warmup and linear decay.

use serde::{Deserialize, Serialize};

use super::loss::{batch_gradients, BatchStats, DropoutStreams, MlmReduction};
use super::params::{Gradients, Parameters};
use super::ModelError;
use crate::masking::MaskedInstance;
use crate::par::Exec;

pub const WARMUP_RATIO: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub peak_lr: f64,
    pub warmup_ratio: f64,
    pub total_steps: usize,
}

impl Schedule {
    pub fn new(peak_lr: f64, total_steps: usize) -> Self {
        Self {
            peak_lr,
            warmup_ratio: WARMUP_RATIO,
            total_steps,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.total_steps == 0 {
            return Err(ModelError::InvalidConfig("total_steps must be positive".into()));
        }
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return Err(ModelError::InvalidConfig(format!("peak_lr must be positive, got {}", self.peak_lr)));
        }
        if !(self.warmup_ratio > 0.0 && self.warmup_ratio <= 1.0) {
            return Err(ModelError::InvalidConfig(format!("warmup_ratio must lie in (0, 1], got {}", self.warmup_ratio)));
        }
        Ok(())
    }

    /// `⌈ratio · total⌉`, treating products within 1e-9 of an integer as that
    /// integer (0.06 · 100 is 6.000000000000001 in binary).
    pub fn warmup_steps(&self) -> usize {
        let x = self.warmup_ratio * self.total_steps as f64;
        let r = x.round();
        let w = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
        (w as usize).clamp(1, self.total_steps.max(1))
    }

    /// Learning rate for update `step` (1-based): `peak · step / W` up to the
    /// warmup length `W`, then linear down to 0 at `total_steps`.
    pub fn lr(&self, step: usize) -> f64 {
        let w = self.warmup_steps();
        let t = self.total_steps;
        if step <= w {
            self.peak_lr * (step as f64 / w as f64)
        } else if step >= t {
            0.0
        } else {
            self.peak_lr * ((t - step) as f64 / (t - w) as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-6,
            weight_decay: 0.01,
        }
    }
}

/// One AdamW update of a scalar. `t` is the 1-based update count; returns the
/// new parameter value.
#[allow(clippy::too_many_arguments)]
pub fn adamw_scalar(p: f64, g: f64, m: &mut f64, v: &mut f64, t: usize, lr: f64, cfg: &AdamWConfig, decay: bool) -> f64 {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / (1.0 - cfg.beta1.powi(t as i32));
    let v_hat = *v / (1.0 - cfg.beta2.powi(t as i32));
    let mut p = p;
    if decay {
        p -= lr * cfg.weight_decay * p;
    }
    p - lr * m_hat / (v_hat.sqrt() + cfg.eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    /// Updates applied so far.
    pub step: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub schedule: Schedule,
    pub adamw: AdamWConfig,
}

impl OptimizerState {
    pub fn new(params: &Parameters, schedule: Schedule, adamw: AdamWConfig) -> Result<Self, ModelError> {
        schedule.validate()?;
        Ok(Self {
            step: 0,
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            schedule,
            adamw,
        })
    }

    /// Applies one update and returns the learning rate used.
    pub fn apply(&mut self, params: &mut Parameters, grads: &Gradients) -> Result<f64, ModelError> {
        if self.step >= self.schedule.total_steps {
            return Err(ModelError::ScheduleExhausted {
                step: self.step,
                total: self.schedule.total_steps,
            });
        }
        if grads.data.len() != params.len() || self.m.len() != params.len() {
            return Err(ModelError::Shape("optimizer state does not match parameters".into()));
        }
        let t = self.step + 1;
        let lr = self.schedule.lr(t);
        for (_, span) in params.layout.named() {
            let decay = span.decays();
            for i in span.range() {
                params.data[i] = adamw_scalar(
                    params.data[i],
                    grads.data[i],
                    &mut self.m[i],
                    &mut self.v[i],
                    t,
                    lr,
                    &self.adamw,
                    decay,
                );
            }
        }
        self.step = t;
        Ok(lr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub stats: BatchStats,
    pub lr: f64,
}

/// Gradient of the batch loss followed by one optimizer update.
pub fn train_step(
    params: &mut Parameters,
    state: &mut OptimizerState,
    batch: &[MaskedInstance],
    reduction: MlmReduction,
    dropout: Option<DropoutStreams>,
    exec: Exec,
) -> Result<StepOutput, ModelError> {
    if state.step >= state.schedule.total_steps {
        return Err(ModelError::ScheduleExhausted {
            step: state.step,
            total: state.schedule.total_steps,
        });
    }
    let (stats, grads) = batch_gradients(params, batch, reduction, dropout, exec)?;
    let lr = state.apply(params, &grads)?;
    Ok(StepOutput { stats, lr })
}
