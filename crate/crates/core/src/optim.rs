//! First-order optimizers and schedules.
//!
//! Everything here ascends: a step moves parameters along `+grad`, because
//! the search maximizes reward. Losses are negated once, at the reward.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Cosine annealing to zero over the run.
    Cosine,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_momentum() -> f64 {
    0.9
}
fn default_betas() -> [f64; 2] {
    [0.9, 0.999]
}
fn default_eps() -> f64 {
    ADAM_EPS
}
fn default_schedule() -> LrSchedule {
    LrSchedule::Constant
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Nesterov momentum for `sgd_momentum`.
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// `(beta1, beta2)` for `adam`.
    #[serde(default = "default_betas")]
    pub betas: [f64; 2],
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// Global-norm clipping threshold; none disables clipping.
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default = "default_schedule")]
    pub schedule: LrSchedule,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            momentum: default_momentum(),
            betas: default_betas(),
            eps: ADAM_EPS,
            weight_decay: 0.0,
            clip: None,
            schedule: LrSchedule::Constant,
        }
    }

    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Self { kind: OptimizerKind::SgdMomentum, momentum, ..Self::adam(lr) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !self.betas.iter().all(|b| (0.0..1.0).contains(b)) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("adam eps must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return bad("clip threshold must be positive");
            }
        }
        Ok(())
    }

    /// Learning rate at step `t` of `horizon` under the configured schedule.
    pub fn lr_at(&self, t: u64, horizon: u64) -> Result<f64> {
        match self.schedule {
            LrSchedule::Constant => Ok(self.lr),
            LrSchedule::Cosine => cosine_lr(t, horizon, self.lr),
        }
    }
}

/// Optimizer buffers for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    /// Learning rate used by the next step.
    pub lr: f64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, len: usize) -> Self {
        let second = match config.kind {
            OptimizerKind::Adam => vec![0.0; len],
            OptimizerKind::SgdMomentum => Vec::new(),
        };
        Self { config, lr: config.lr, step: 0, first: vec![0.0; len], second, beta1_pow: 1.0, beta2_pow: 1.0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    /// Clips, applies weight decay and dispatches on the optimizer kind.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        match self.config.kind {
            OptimizerKind::Adam => adam_step(self, params, grad),
            OptimizerKind::SgdMomentum => sgd_momentum_step(self, params, grad),
        }
    }

    fn check(&self, params: &[f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.len() || grad.len() != self.len() {
            return Err(Error::ShapeMismatch {
                op: "optimizer step",
                detail: alloc::format!(
                    "state has {} entries, params {}, grad {}",
                    self.len(),
                    params.len(),
                    grad.len()
                ),
            });
        }
        Ok(())
    }

    fn effective_grad(&self, params: &[f64], grad: &[f64]) -> Vec<f64> {
        let mut g = grad.to_vec();
        if let Some(c) = self.config.clip {
            clip_gradient(&mut g, c);
        }
        let wd = self.config.weight_decay;
        if wd != 0.0 {
            for (g, p) in g.iter_mut().zip(params) {
                *g -= wd * p;
            }
        }
        g
    }
}

/// Global-norm clipping in place. Returns the norm before clipping.
pub fn clip_gradient(grad: &mut [f64], threshold: f64) -> f64 {
    let norm = libm::sqrt(grad.iter().map(|g| g * g).sum());
    if norm > threshold {
        let s = threshold / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Bias-corrected Adam, ascending.
pub fn adam_step(state: &mut OptimizerState, params: &mut [f64], grad: &[f64]) -> Result<()> {
    state.check(params, grad)?;
    if state.second.len() != state.first.len() {
        return Err(Error::InvalidConfig("adam step on a state without second moments".into()));
    }
    let g = state.effective_grad(params, grad);
    let [b1, b2] = state.config.betas;
    state.step += 1;
    state.beta1_pow *= b1;
    state.beta2_pow *= b2;
    let c1 = 1.0 - state.beta1_pow;
    let c2 = 1.0 - state.beta2_pow;
    let (lr, eps) = (state.lr, state.config.eps);
    for i in 0..params.len() {
        let m = &mut state.first[i];
        *m = b1 * *m + (1.0 - b1) * g[i];
        let v = &mut state.second[i];
        *v = b2 * *v + (1.0 - b2) * g[i] * g[i];
        params[i] += lr * (state.first[i] / c1) / (libm::sqrt(state.second[i] / c2) + eps);
    }
    Ok(())
}

/// Nesterov-momentum SGD, ascending: `v = mu v + g`, step `g + mu v`.
pub fn sgd_momentum_step(state: &mut OptimizerState, params: &mut [f64], grad: &[f64]) -> Result<()> {
    state.check(params, grad)?;
    let g = state.effective_grad(params, grad);
    let mu = state.config.momentum;
    let lr = state.lr;
    state.step += 1;
    for i in 0..params.len() {
        let v = &mut state.first[i];
        *v = mu * *v + g[i];
        params[i] += lr * (g[i] + mu * *v);
    }
    Ok(())
}

fn check_horizon(t: u64, horizon: u64) -> Result<()> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    if t > horizon {
        return Err(Error::StepOutOfRange { step: t, horizon });
    }
    Ok(())
}

/// `lr0 (1 + cos(pi t / T)) / 2`.
pub fn cosine_lr(t: u64, horizon: u64, lr0: f64) -> Result<f64> {
    check_horizon(t, horizon)?;
    Ok(lr0 * (1.0 + libm::cos(core::f64::consts::PI * t as f64 / horizon as f64)) / 2.0)
}

/// `from + (to - from) t / T`.
pub fn linear_schedule(t: u64, horizon: u64, from: f64, to: f64) -> Result<f64> {
    check_horizon(t, horizon)?;
    let s = t as f64 / horizon as f64;
    // Written as a convex combination so both endpoints are exact.
    Ok(from * (1.0 - s) + to * s)
}
